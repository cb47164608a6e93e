//! Run manifests: what was run, on which inputs, with which configuration.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: serde_json::Value,
    /// Digest of `config` serialized compactly.
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_digest(path: &Path) -> Result<InputDigest, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(InputDigest {
        path: path.to_path_buf(),
        sha256: hex_digest(&bytes),
    })
}

impl Manifest {
    pub fn new(
        command: &str,
        config: &impl Serialize,
        seed: Option<u64>,
        inputs: &[&Path],
    ) -> Result<Self, CliError> {
        let config = serde_json::to_value(config).map_err(|e| CliError::Config(e.to_string()))?;
        let compact = serde_json::to_vec(&config).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(Self {
            tool: "bonmal",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config,
            config_sha256: hex_digest(&compact),
            seed,
            inputs: inputs.iter().map(|p| file_digest(p)).collect::<Result<_, _>>()?,
            outputs: Vec::new(),
        })
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        write_json(&dir.join("manifest.json"), self)
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}
