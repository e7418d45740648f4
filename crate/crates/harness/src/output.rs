//! File output and the per-command manifest.
//!
//! All writes of one command go through a single [`OutputSink`], which hashes
//! each file as it is written.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::Result;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    /// Path relative to the command directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub optimizer: String,
    pub seed: u64,
    pub iterations: usize,
    pub grad_evals: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_ms: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub runs: Vec<RunSummary>,
    pub grad_evals_total: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_ms_total: Option<f64>,
    pub outputs: Vec<OutputEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub struct OutputSink {
    dir: PathBuf,
    entries: Vec<OutputEntry>,
}

impl OutputSink {
    /// Opens `dir`, removing the files listed by a previous manifest there so none is left orphaned.
    pub fn create(dir: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&dir)?;
        let old = dir.join(MANIFEST_NAME);
        if let Ok(text) = std::fs::read(&old) {
            if let Ok(previous) = serde_json::from_slice::<RunManifest>(&text) {
                for e in previous.outputs {
                    let _ = std::fs::remove_file(dir.join(e.path));
                }
            }
            std::fs::remove_file(old)?;
        }
        Ok(Self { dir, entries: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes)?;
        self.entries.retain(|e| e.path != name);
        self.entries.push(OutputEntry { path: name.to_string(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 });
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write_bytes(name, &bytes)
    }

    pub fn write_csv(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<PathBuf> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| crate::error::HarnessError::Io(e.to_string()))?;
        self.write_bytes(name, &bytes)
    }

    /// Writes `manifest.json` listing every file written so far.
    pub fn finish(
        mut self,
        command: &str,
        config: &ExperimentConfig,
        runs: Vec<RunSummary>,
        record_timing: bool,
    ) -> Result<RunManifest> {
        let grad_evals_total = runs.iter().map(|r| r.grad_evals).sum();
        let wall_ms_total = record_timing.then(|| runs.iter().filter_map(|r| r.wall_ms).sum());
        let manifest = RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            seeds: config.seeds.clone(),
            runs,
            grad_evals_total,
            wall_ms_total,
            outputs: std::mem::take(&mut self.entries),
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        std::fs::write(self.dir.join(MANIFEST_NAME), bytes)?;
        Ok(manifest)
    }
}

/// Shortest round-trip form, with an exponent for very small or large magnitudes.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

/// Re-hashes every listed output and reports the first mismatch or missing file.
pub fn verify_manifest(dir: &Path) -> Result<RunManifest> {
    let text = std::fs::read(dir.join(MANIFEST_NAME))?;
    let manifest: RunManifest = serde_json::from_slice(&text)?;
    for entry in &manifest.outputs {
        let bytes = std::fs::read(dir.join(&entry.path))?;
        if sha256_hex(&bytes) != entry.sha256 {
            return Err(crate::error::HarnessError::Failed(format!("hash mismatch for {}", entry.path)));
        }
    }
    Ok(manifest)
}
