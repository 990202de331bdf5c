//! Parameter checkpoints: a flat little-endian `f64` tensor file plus a JSON
//! shape manifest. Loading reproduces every parameter bit-for-bit.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Activation, Head, Net};
use crate::error::{Error, Result};

const FORMAT: &str = "demorec.checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    dims: Vec<usize>,
    activation: Activation,
    head: Head,
    offset: usize,
    len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    tensors: Vec<TensorEntry>,
}

/// A named collection of networks loaded from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub nets: Vec<(String, Net)>,
}

impl Checkpoint {
    pub fn get(&self, name: &str) -> Result<&Net> {
        self.nets
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, net)| net)
            .ok_or_else(|| Error::data(format!("checkpoint has no tensor `{name}`")))
    }
}

fn paths(prefix: &Path) -> (PathBuf, PathBuf) {
    let mut bin = prefix.as_os_str().to_owned();
    bin.push(".bin");
    let mut manifest = prefix.as_os_str().to_owned();
    manifest.push(".json");
    (bin.into(), manifest.into())
}

/// Write `<prefix>.bin` and `<prefix>.json`.
pub fn save_checkpoint(prefix: &Path, nets: &[(&str, &Net)]) -> Result<()> {
    let (bin_path, manifest_path) = paths(prefix);
    let mut bytes = Vec::new();
    let mut tensors = Vec::with_capacity(nets.len());
    let mut offset = 0;
    for (name, net) in nets {
        for p in net.params() {
            bytes.extend_from_slice(&p.to_le_bytes());
        }
        tensors.push(TensorEntry {
            name: name.to_string(),
            dims: net.dims().to_vec(),
            activation: net.activation(),
            head: net.head(),
            offset,
            len: net.param_count(),
        });
        offset += net.param_count();
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        version: VERSION,
        tensors,
    };
    fs::write(&bin_path, bytes)?;
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn load_checkpoint(prefix: &Path) -> Result<Checkpoint> {
    let (bin_path, manifest_path) = paths(prefix);
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)?;
    if manifest.format != FORMAT || manifest.version != VERSION {
        return Err(Error::data(format!(
            "unsupported checkpoint {} v{}",
            manifest.format, manifest.version
        )));
    }
    let bytes = fs::read(&bin_path)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::data("checkpoint tensor file is truncated"));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut nets = Vec::with_capacity(manifest.tensors.len());
    for t in manifest.tensors {
        let slice = values
            .get(t.offset..t.offset + t.len)
            .ok_or_else(|| Error::data(format!("tensor `{}` exceeds data file", t.name)))?;
        nets.push((
            t.name,
            Net::from_parts(t.dims, t.activation, t.head, slice.to_vec())?,
        ));
    }
    Ok(Checkpoint { nets })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let a = Net::new(&[5, 7, 3], Activation::Tanh, Head::Softmax, 1).unwrap();
        let b = Net::new(&[2, 1], Activation::Relu, Head::Linear, 2).unwrap();
        let prefix = dir.path().join("ckpt");
        save_checkpoint(&prefix, &[("actor", &a), ("critic", &b)]).unwrap();
        let loaded = load_checkpoint(&prefix).unwrap();
        let la = loaded.get("actor").unwrap();
        assert_eq!(la, &a);
        assert!(la
            .params()
            .iter()
            .zip(a.params())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(loaded.get("critic").unwrap(), &b);
        assert!(loaded.get("missing").is_err());
    }
}
