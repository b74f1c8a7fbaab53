use std::path::Path;

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const FILE_NAME: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub toolkit_version: &'static str,
    pub seed: u64,
    pub threads: usize,
    /// Digest of the canonical `config` JSON.
    pub config_hash: String,
    pub config: serde_json::Value,
    /// SOURCE_DATE_EPOCH when set, else the wall clock.
    pub created_unix: u64,
    pub outputs: Vec<String>,
}

pub fn config_hash(config: &serde_json::Value) -> String {
    let text = serde_json::to_string(config).unwrap_or_default();
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn created_unix() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or_else(|| {
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        })
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, threads: usize, config: serde_json::Value) -> Self {
        RunManifest {
            command: command.into(),
            toolkit_version: env!("CARGO_PKG_VERSION"),
            seed,
            threads,
            config_hash: config_hash(&config),
            config,
            created_unix: created_unix(),
            outputs: Vec::new(),
        }
    }

    pub fn write(mut self, dir: &Path) -> anyhow::Result<()> {
        self.outputs.sort();
        let text = serde_json::to_string_pretty(&self)?;
        let path = dir.join(FILE_NAME);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}
