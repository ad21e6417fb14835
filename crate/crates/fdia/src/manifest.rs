//! Run manifests: what was run, with which configuration, and the SHA-256
//! of every file written.
//!
//! Manifests carry no wall-clock time so that identical runs give identical
//! bytes. When `SOURCE_DATE_EPOCH` is set its value is recorded instead.

use std::collections::BTreeMap;
use std::path::Path;

use fdia_core::scenarios::ScenarioConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Source;
use crate::error::{AppError, AppResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the run directory, `/`-separated.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub toolkit_version: String,
    pub command: String,
    pub seed: u64,
    pub config: ScenarioConfig,
    pub provenance: BTreeMap<String, Source>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_date_epoch: Option<String>,
    pub files: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

impl RunManifest {
    pub fn new(command: &str, config: &ScenarioConfig, provenance: &BTreeMap<String, Source>) -> Self {
        RunManifest {
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed: config.seed,
            config: config.clone(),
            provenance: provenance.clone(),
            source_date_epoch: std::env::var("SOURCE_DATE_EPOCH").ok(),
            files: Vec::new(),
        }
    }

    /// Record a file already written under `root`.
    pub fn record(&mut self, root: &Path, relative: &str) -> AppResult<()> {
        let path = root.join(relative);
        let bytes = std::fs::read(&path).map_err(|e| AppError::io(&path, e))?;
        self.files.push(FileEntry {
            path: relative.to_string(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    pub fn to_json(&self) -> AppResult<String> {
        let mut sorted = self.clone();
        sorted.files.sort_by(|a, b| a.path.cmp(&b.path));
        serde_json::to_string_pretty(&sorted)
            .map(|s| s + "\n")
            .map_err(|e| AppError::Format(format!("cannot encode manifest: {e}")))
    }

    pub fn write(&self, root: &Path) -> AppResult<()> {
        let path = root.join(MANIFEST_FILE);
        std::fs::write(&path, self.to_json()?).map_err(|e| AppError::io(&path, e))
    }

    pub fn read(root: &Path) -> AppResult<Self> {
        let path = root.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| AppError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| AppError::Format(format!("cannot parse manifest: {e}")))
    }

    /// Files whose current content no longer matches the recorded hash.
    pub fn mismatches(&self, root: &Path) -> AppResult<Vec<String>> {
        let mut bad = Vec::new();
        for f in &self.files {
            let path = root.join(&f.path);
            let bytes = std::fs::read(&path).map_err(|e| AppError::io(&path, e))?;
            if sha256_hex(&bytes) != f.sha256 {
                bad.push(f.path.clone());
            }
        }
        Ok(bad)
    }
}
