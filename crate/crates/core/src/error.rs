use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors surfaced by every stage of the pipeline.
///
/// Each variant maps onto a process exit code through [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("provider error after {retries} retries: {message}")]
    Provider { retries: u32, message: String },

    #[error("demonstration collection stopped; completed users {completed:?}: {source}")]
    PartialCollection {
        completed: Vec<usize>,
        #[source]
        source: Box<Error>,
    },

    #[error("missing prerequisite artifact `{artifact}`; run `{hint}` first")]
    MissingArtifact { artifact: String, hint: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Error::Data(message.into())
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        Error::Numeric(message.into())
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Error::Usage(message.into())
    }

    /// 0 success, 1 configuration, 2 data, 3 numeric, 4 provider.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Usage(_) | Error::MissingArtifact { .. } => 1,
            Error::Data(_) | Error::Io(_) | Error::Json(_) => 2,
            Error::Numeric(_) => 3,
            Error::Provider { .. } => 4,
            Error::PartialCollection { source, .. } => source.exit_code(),
        }
    }
}
