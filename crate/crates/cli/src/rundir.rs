//! Run directories: effective configuration, prerequisite checks and manifests.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use demorec::config::RunConfig;
use demorec::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const EFFECTIVE_CONFIG: &str = "effective_config.toml";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_sha256(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

/// Digest of the configuration with `output_dir` blanked, so identical
/// settings hash identically wherever the run lives.
pub fn config_sha256(config: &RunConfig) -> Result<String> {
    let mut c = config.clone();
    c.output_dir = String::new();
    Ok(sha256_hex(c.to_toml()?.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    pub config_sha256: Option<String>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    /// Seconds since the Unix epoch; the only field that differs between reruns.
    pub created_unix: u64,
}

/// Tracks what a command read and wrote so the manifest can list it.
pub struct Recorder {
    root: PathBuf,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
}

impl Recorder {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Recorder {
            root,
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn digest(&self, path: &Path) -> Result<FileDigest> {
        let shown = path.strip_prefix(&self.root).unwrap_or(path);
        Ok(FileDigest {
            path: shown.to_string_lossy().into_owned(),
            sha256: file_sha256(path)?,
        })
    }

    /// Fail with a hint when a prerequisite is missing, otherwise record it as an input.
    pub fn require(&mut self, name: &str, hint: &str) -> Result<PathBuf> {
        let path = self.path(name);
        if !path.is_file() {
            return Err(Error::MissingArtifact {
                artifact: path.display().to_string(),
                hint: hint.to_string(),
            });
        }
        self.input(&path)?;
        Ok(path)
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let d = self.digest(path)?;
        self.inputs.push(d);
        Ok(())
    }

    pub fn output(&mut self, name: &str) -> Result<()> {
        let d = self.digest(&self.path(name))?;
        self.outputs.push(d);
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        fs::write(self.path(name), serde_json::to_string_pretty(value)? + "\n")?;
        self.output(name)
    }

    pub fn finish(self, command: &str, stem: &str, config: Option<&RunConfig>) -> Result<Manifest> {
        let created_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let manifest = Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.map(|c| c.seed),
            config_sha256: config.map(config_sha256).transpose()?,
            inputs: self.inputs,
            outputs: self.outputs,
            created_unix,
        };
        let path = self.root.join(format!("manifest-{stem}.json"));
        fs::write(path, serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(manifest)
    }
}

/// Persist the effective configuration, refusing to mix configurations in one directory.
pub fn bind_config(root: &Path, config: &RunConfig) -> Result<()> {
    fs::create_dir_all(root)?;
    let path = root.join(EFFECTIVE_CONFIG);
    let text = config.to_toml()?;
    if path.is_file() {
        let existing = RunConfig::parse(&fs::read_to_string(&path)?, &[])?;
        if config_sha256(&existing)? != config_sha256(config)? {
            return Err(Error::config(
                "",
                format!(
                    "{} holds artifacts from a different configuration; choose another --out",
                    root.display()
                ),
            ));
        }
        return Ok(());
    }
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_output_dir() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.output_dir = "elsewhere".into();
        assert_eq!(config_sha256(&a).unwrap(), config_sha256(&b).unwrap());
        b.seed = 9;
        assert_ne!(config_sha256(&a).unwrap(), config_sha256(&b).unwrap());
    }

    #[test]
    fn missing_prerequisite_names_artifact() {
        let dir = tempfile::tempdir().unwrap();
        let mut rec = Recorder::new(dir.path()).unwrap();
        let e = rec.require("demos.jsonl", "demorec collect-demos").unwrap_err();
        assert_eq!(e.exit_code(), 1);
        assert!(e.to_string().contains("demos.jsonl"), "{e}");
    }

    #[test]
    fn conflicting_config_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let a = RunConfig::default();
        bind_config(dir.path(), &a).unwrap();
        bind_config(dir.path(), &a).unwrap();
        let mut b = a.clone();
        b.seed = 3;
        assert!(matches!(bind_config(dir.path(), &b), Err(Error::Config { .. })));
    }
}
