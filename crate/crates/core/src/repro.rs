//! Reproducibility records: what a command consumed and produced, by hash.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::{Error, Result};

pub const RECORD_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproRecord {
    pub version: u32,
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    /// Full canonical config, so the record alone can replay the run.
    pub config: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset_hash: Option<String>,
    /// Checkpoints read, by role.
    pub inputs: BTreeMap<String, String>,
    /// Files written, by name relative to the output root.
    pub outputs: BTreeMap<String, String>,
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    Ok(hash_bytes(&std::fs::read(path).map_err(Error::at_path(path))?))
}

impl ReproRecord {
    pub fn new(command: &str, seed: u64, config: &RunConfig) -> Self {
        ReproRecord {
            version: RECORD_VERSION,
            command: command.into(),
            seed,
            config_hash: config.hash(),
            config: config.to_toml(),
            dataset_hash: None,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, role: &str, path: impl AsRef<Path>) -> Result<()> {
        self.inputs.insert(role.into(), hash_file(path)?);
        Ok(())
    }

    /// Records a written file under its path relative to `root`.
    pub fn output(&mut self, root: &Path, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let name = path
            .strip_prefix(root)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/");
        self.outputs.insert(name, hash_file(path)?);
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("record serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(Error::at_path(path))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<ReproRecord> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(Error::at_path(path))?;
        serde_json::from_str(&text).map_err(|e| Error::format("repro record", e.to_string()))
    }
}
