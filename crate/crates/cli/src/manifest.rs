use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> io::Result<String> {
    let mut hasher = Sha256::new();
    let mut f = File::open(path)?;
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Provenance record written beside a run's outputs. Carries no timestamps so that
/// identical runs produce identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub tool_version: String,
    pub framekit_version: String,
    pub config_digest: String,
    pub parameters: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, config_digest: String, parameters: serde_json::Value) -> Self {
        Manifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            framekit_version: framekit::VERSION.to_string(),
            config_digest,
            parameters,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> io::Result<()> {
        self.inputs.insert(path.display().to_string(), file_sha256(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> io::Result<()> {
        self.outputs.insert(path.display().to_string(), file_sha256(path)?);
        Ok(())
    }

    /// Writes `<stem>.manifest.json` next to `primary_output`.
    pub fn write_beside(&self, primary_output: &Path) -> io::Result<PathBuf> {
        let name = primary_output.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let path = primary_output.with_file_name(format!("{name}.manifest.json"));
        self.write_to(&path)?;
        Ok(path)
    }

    pub fn write_to(&self, path: &Path) -> io::Result<()> {
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        std::fs::write(path, json)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digests_are_stable() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.txt");
        std::fs::write(&p, "abc").unwrap();
        assert_eq!(file_sha256(&p).unwrap(), sha256_hex(b"abc"));
    }

    #[test]
    fn manifest_sits_beside_output() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("model.json");
        std::fs::write(&out, "{}").unwrap();
        let mut m = Manifest::new("train", "d".into(), serde_json::json!({}));
        m.output(&out).unwrap();
        let written = m.write_beside(&out).unwrap();
        assert_eq!(written, dir.path().join("model.json.manifest.json"));
        let back: Manifest = serde_json::from_str(&std::fs::read_to_string(written).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
