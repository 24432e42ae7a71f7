//! Run manifests: enough metadata alongside every CLI output to reproduce
//! the run bitwise (subcommand, flags, seed, and SHA-256 digests of the
//! files read and written).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub flags: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    pub artifact_version: String,
    pub input_digests: BTreeMap<String, String>,
    pub output_digests: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(subcommand: &str) -> Self {
        RunManifest {
            subcommand: subcommand.to_string(),
            flags: BTreeMap::new(),
            master_seed: None,
            artifact_version: ARTIFACT_VERSION.to_string(),
            input_digests: BTreeMap::new(),
            output_digests: BTreeMap::new(),
        }
    }

    pub fn flag(mut self, name: &str, value: impl ToString) -> Self {
        self.flags.insert(name.to_string(), value.to_string());
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.master_seed = Some(seed);
        self
    }

    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        self.input_digests
            .insert(path.display().to_string(), digest_file(path)?);
        Ok(())
    }

    pub fn record_output(&mut self, path: &Path) -> Result<()> {
        self.output_digests
            .insert(path.display().to_string(), digest_file(path)?);
        Ok(())
    }

    /// Writes `<out>.manifest.json` next to the primary output.
    pub fn write_alongside(&self, primary_output: &Path) -> Result<()> {
        let mut name = primary_output.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        let path = primary_output.with_file_name(name);
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }
}

pub fn digest_bytes(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}

pub fn digest_file(path: &Path) -> Result<String> {
    Ok(digest_bytes(&std::fs::read(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_stable() {
        assert_eq!(
            digest_bytes(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn manifest_round_trip_and_alongside_name() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("result.json");
        std::fs::write(&out, b"{}").unwrap();
        let mut m = RunManifest::new("csdiv").flag("bandwidth", 1.0).seed(42);
        m.record_output(&out).unwrap();
        m.write_alongside(&out).unwrap();
        let loaded: RunManifest = serde_json::from_slice(
            &std::fs::read(dir.path().join("result.json.manifest.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(m, loaded);
        assert_eq!(loaded.master_seed, Some(42));
    }
}
