//! Run manifests: enough provenance to reproduce any artifact byte-for-byte.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::checkpoint::sha256_hex;
use crate::config::FORMAT_VERSION;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    pub command: String,
    pub seed: u64,
    /// SHA-256 of the resolved config JSON, when the command has one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_sha256: Option<String>,
    pub wall_ms: u64,
    pub outputs: Vec<OutputEntry>,
    /// Command-specific fields (solver, steps, omega, schedule, ...).
    pub extra: Map<String, Value>,
}

/// Collects outputs while a command runs, then writes `manifest.json`.
pub struct ManifestBuilder {
    command: String,
    seed: u64,
    config_sha256: Option<String>,
    outputs: Vec<OutputEntry>,
    extra: Map<String, Value>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str, seed: u64) -> ManifestBuilder {
        ManifestBuilder {
            command: command.into(),
            seed,
            config_sha256: None,
            outputs: Vec::new(),
            extra: Map::new(),
            started: Instant::now(),
        }
    }

    pub fn config_json(&mut self, resolved: &str) -> &mut Self {
        self.config_sha256 = Some(sha256_hex(resolved.as_bytes()));
        self
    }

    /// Records a file that was just written, hashing its current content.
    pub fn output(&mut self, path: &Path) -> Result<&mut Self> {
        let bytes = std::fs::read(path)?;
        self.outputs.push(OutputEntry {
            path: path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string()),
            sha256: sha256_hex(&bytes),
        });
        Ok(self)
    }

    pub fn extra(&mut self, key: &str, value: Value) -> &mut Self {
        self.extra.insert(key.into(), value);
        self
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let manifest = RunManifest {
            version: FORMAT_VERSION,
            command: self.command.clone(),
            seed: self.seed,
            config_sha256: self.config_sha256.clone(),
            wall_ms: self.started.elapsed().as_millis() as u64,
            outputs: self.outputs.clone(),
            extra: self.extra.clone(),
        };
        std::fs::write(path, serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(())
    }
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}
