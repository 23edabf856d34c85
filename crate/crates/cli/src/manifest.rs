//! Run manifests: what was run, with which inputs, and checksums of what it wrote.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ConfigFile;
use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct OutputRecord {
    pub path: PathBuf,
    pub sha256: String,
}

/// One Monte Carlo cell of a table or tail run.
#[derive(Debug, Clone, Serialize)]
pub struct CellRecord {
    pub n: usize,
    pub delta_rule: String,
    pub delta: f64,
    #[serde(rename = "N")]
    pub replications: usize,
    pub xi_hat: Option<f64>,
    pub errors_sha256: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: ConfigFile,
    pub wall_clock_seconds: f64,
    pub reference: Option<String>,
    pub cells: Vec<CellRecord>,
    pub outputs: Vec<OutputRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Collects outputs while a command runs and writes `manifest.json` at the end.
#[derive(Debug)]
pub struct ManifestBuilder {
    command: String,
    config: ConfigFile,
    started: Instant,
    pub reference: Option<String>,
    pub cells: Vec<CellRecord>,
    outputs: Vec<OutputRecord>,
}

impl ManifestBuilder {
    pub fn new(command: &str, config: ConfigFile) -> Self {
        Self {
            command: command.into(),
            config,
            started: Instant::now(),
            reference: None,
            cells: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Writes `bytes` to `dir/name` and records its checksum.
    pub fn write_output(&mut self, dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.outputs.push(OutputRecord { path: PathBuf::from(name), sha256: sha256_hex(bytes) });
        Ok(path)
    }

    pub fn finish(self, dir: &Path, manifest_name: &str) -> Result<PathBuf, CliError> {
        let manifest = RunManifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION").into(),
            config: self.config,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            reference: self.reference,
            cells: self.cells,
            outputs: self.outputs,
        };
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let path = dir.join(manifest_name);
        fs::write(&path, json + "\n").map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}
