use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};
use crate::formats::SCHEMA_VERSION;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputRecord {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

/// What produced a set of outputs. Two runs with equal manifests write
/// byte-identical files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub schema_version: String,
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    /// Every option after defaults were applied.
    pub options: BTreeMap<String, String>,
    pub inputs: Vec<InputRecord>,
    pub seed: u64,
    pub out_dir: String,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, out_dir: &Path) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.into(),
            tool: env!("CARGO_PKG_NAME").into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            options: BTreeMap::new(),
            inputs: Vec::new(),
            seed,
            out_dir: out_dir.display().to_string(),
        }
    }

    pub fn option(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.options.insert(key.into(), value.to_string());
        self
    }

    /// Records `path` under `role` with the SHA-256 of its bytes.
    pub fn input(&mut self, role: &str, path: &Path) -> CliResult<&mut Self> {
        let bytes = std::fs::read(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        self.inputs.push(InputRecord { role: role.into(), path: path.display().to_string(), sha256: hex::encode(Sha256::digest(&bytes)) });
        Ok(self)
    }
}
