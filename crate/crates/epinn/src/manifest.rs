//! `manifest.json`: what produced a run directory and the SHA-256 of each
//! file written, so a run can be repeated and checked bit for bit.
//!
//! ```json
//! {
//!   "version": "epinn 0.1.0",
//!   "seed": 0,
//!   "config": "problem = \"poisson1d\"\n...",
//!   "steps": [
//!     { "command": "generate", "files": { "dataset.csv": "9f86d0…" } },
//!     { "command": "train", "files": { "checkpoint.json": "…", "curve.csv": "…" } }
//!   ]
//! }
//! ```
//!
//! Re-running a command replaces its step; no timestamps are stored, so
//! identical runs give identical manifests.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::AppError;

pub const FILE_NAME: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub command: String,
    pub files: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub seed: u64,
    /// The fully resolved configuration as TOML.
    pub config: String,
    pub steps: Vec<Step>,
}

pub fn version_tag() -> String {
    format!("epinn {}", env!("CARGO_PKG_VERSION"))
}

pub fn sha256_file(path: &Path) -> Result<String, AppError> {
    let bytes = std::fs::read(path).map_err(|e| AppError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Option<Self>, AppError> {
        let path = dir.join(FILE_NAME);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| AppError::io(&path, e))?;
        serde_json::from_str(&text).map(Some).map_err(|e| AppError::Data(format!("{}: {e}", path.display())))
    }

    /// Hashes `files` (relative to `dir`) and records them under `command`,
    /// replacing any earlier step of the same name.
    pub fn record(dir: &Path, seed: u64, config: &str, command: &str, files: &[&str]) -> Result<Self, AppError> {
        let mut m = Self::load(dir)?.unwrap_or_else(|| Self {
            version: version_tag(),
            seed,
            config: config.to_string(),
            steps: Vec::new(),
        });
        m.version = version_tag();
        m.seed = seed;
        m.config = config.to_string();
        let mut hashes = BTreeMap::new();
        for f in files {
            hashes.insert(f.to_string(), sha256_file(&dir.join(f))?);
        }
        m.steps.retain(|s| s.command != command);
        m.steps.push(Step { command: command.into(), files: hashes });
        let path = dir.join(FILE_NAME);
        let json = serde_json::to_string_pretty(&m).expect("manifest serializes");
        std::fs::write(&path, json + "\n").map_err(|e| AppError::io(&path, e))?;
        Ok(m)
    }

    pub fn hash_of(&self, file: &str) -> Option<&str> {
        self.steps.iter().rev().find_map(|s| s.files.get(file).map(String::as_str))
    }
}
