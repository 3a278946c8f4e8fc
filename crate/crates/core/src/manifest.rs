//! Run manifests: a JSON record of what produced an output directory —
//! tool version, config hash, input digests, per-stage timing, and the
//! full resolved parameters. Re-running with identical inputs and config
//! reproduces the same hashes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::pipeline::PipelineConfig;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    /// input path -> sha256 of its bytes
    pub input_digests: BTreeMap<String, String>,
    /// stage name -> elapsed milliseconds
    pub timing_ms: BTreeMap<String, u64>,
    /// the fully resolved configuration
    pub params: serde_json::Value,
}

fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

/// Canonical hash of a pipeline configuration.
pub fn config_hash(cfg: &PipelineConfig) -> Result<String> {
    Ok(hex_digest(serde_json::to_string(cfg)?.as_bytes()))
}

pub fn file_digest(path: &Path) -> Result<String> {
    Ok(hex_digest(&std::fs::read(path)?))
}

impl RunManifest {
    pub fn new(cfg: &PipelineConfig) -> Result<Self> {
        Ok(RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config_hash(cfg)?,
            input_digests: BTreeMap::new(),
            timing_ms: BTreeMap::new(),
            params: serde_json::to_value(cfg)?,
        })
    }

    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        self.input_digests
            .insert(path.display().to_string(), file_digest(path)?);
        Ok(())
    }

    pub fn record_timing(&mut self, stage: &str, elapsed: std::time::Duration) {
        self.timing_ms.insert(stage.to_string(), elapsed.as_millis() as u64);
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_configs_hash_identically() {
        let a = PipelineConfig::default();
        let b = PipelineConfig::default();
        assert_eq!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
        let c = PipelineConfig { se_stages: 2, ..PipelineConfig::default() };
        assert_ne!(config_hash(&a).unwrap(), config_hash(&c).unwrap());
    }

    #[test]
    fn input_digests_are_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("in.bin");
        std::fs::write(&f, b"payload").unwrap();
        let mut m1 = RunManifest::new(&PipelineConfig::default()).unwrap();
        m1.record_input(&f).unwrap();
        let mut m2 = RunManifest::new(&PipelineConfig::default()).unwrap();
        m2.record_input(&f).unwrap();
        assert_eq!(m1.input_digests, m2.input_digests);
    }

    #[test]
    fn manifest_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        let mut m = RunManifest::new(&PipelineConfig::default()).unwrap();
        m.record_timing("decode", std::time::Duration::from_millis(123));
        m.write(&path).unwrap();
        assert_eq!(RunManifest::read(&path).unwrap(), m);
    }
}
