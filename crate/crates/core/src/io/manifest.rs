//! Provenance record written next to every run's outputs.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{serialize_config, Config, ConfigDocument};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// SHA-256 of the canonical configuration JSON.
    pub config_digest: String,
    pub seed: u64,
    /// Full configuration document the run used.
    pub parameters: ConfigDocument,
    pub code_version: String,
    pub wall_clock_s: f64,
    /// SHA-256 of each written output, by file name.
    pub outputs: Vec<(String, String)>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of the canonical serialization, so formatting and key order of the
/// user's file do not matter.
pub fn config_digest(cfg: &Config) -> String {
    sha256_hex(serialize_config(cfg).as_bytes())
}

impl RunManifest {
    pub fn new(cfg: &Config, runtime: Duration) -> Self {
        Self {
            config_digest: config_digest(cfg),
            seed: cfg.scenario.seed,
            parameters: cfg.to_document(),
            code_version: format!("hto-sim {}", env!("CARGO_PKG_VERSION")),
            wall_clock_s: runtime.as_secs_f64(),
            outputs: Vec::new(),
        }
    }

    pub fn add_output(&mut self, name: &str, bytes: &[u8]) {
        self.outputs.push((name.to_string(), sha256_hex(bytes)));
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        super::write_atomic(path, text.as_bytes())
    }
}
