//! Versioned line-delimited JSON files: one header object, then one record per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format: String,
    pub version: u32,
}

impl Header {
    pub fn new(format: &str, version: u32) -> Self {
        Header {
            format: format.to_string(),
            version,
        }
    }
}

pub fn write<R: Serialize>(path: &Path, header: &Header, records: impl IntoIterator<Item = R>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut out, header)?;
    out.write_all(b"\n")?;
    for r in records {
        serde_json::to_writer(&mut out, &r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read<R: DeserializeOwned>(path: &Path, expected: &Header) -> Result<Vec<R>> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::data(format!("{} is empty", path.display())))??;
    let header: Header = serde_json::from_str(&first)
        .map_err(|e| Error::data(format!("{}: bad header: {e}", path.display())))?;
    if &header != expected {
        return Err(Error::data(format!(
            "{}: expected {} v{}, found {} v{}",
            path.display(),
            expected.format,
            expected.version,
            header.format,
            header.version
        )));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::data(format!("{} line {}: {e}", path.display(), i + 2)))?,
        );
    }
    Ok(out)
}
