//! `manifest.json`: one entry per stage run, appended in run order.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::io::{read_bytes, sha256_hex, write_atomic};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// A file relative to the run directory, with `/` separators.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl FileEntry {
    pub fn of_bytes(path: &str, bytes: &[u8]) -> Self {
        FileEntry { path: path.to_string(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageEntry {
    pub stage: String,
    /// The `--seed` the stage was run with.
    pub top_seed: u64,
    /// The seed the stage derived from it and actually used.
    pub seed: u64,
    /// Effective configuration, every default spelled out.
    pub config: serde_json::Value,
    pub config_sha256: String,
    pub inputs: Vec<FileEntry>,
    pub outputs: Vec<FileEntry>,
    /// Stage-specific counts and diagnostics.
    pub summary: serde_json::Value,
    pub elapsed_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub stages: Vec<StageEntry>,
}

impl Default for RunManifest {
    fn default() -> Self {
        RunManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            tool: "apz".into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            stages: Vec::new(),
        }
    }
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let bytes = read_bytes(&path)?;
        let m: RunManifest = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
        if m.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(CliError::Schema(format!("{}: schema version {}", path.display(), m.schema_version)));
        }
        Ok(m)
    }

    /// The existing manifest, or an empty one for a fresh directory.
    pub fn load_or_default(dir: &Path) -> Result<Self> {
        match Self::load(dir) {
            Err(CliError::MissingInput(_)) => Ok(Self::default()),
            other => other,
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self).map_err(|e| CliError::Stage(e.to_string()))?;
        bytes.push(b'\n');
        write_atomic(&dir.join(MANIFEST_FILE), &bytes)
    }

    /// Every file some stage wrote, as last written.
    pub fn current_outputs(&self) -> BTreeMap<&str, &FileEntry> {
        let mut out = BTreeMap::new();
        for s in &self.stages {
            for f in &s.outputs {
                out.insert(f.path.as_str(), f);
            }
        }
        out
    }

    pub fn recorded(&self, path: &str) -> Option<&FileEntry> {
        self.stages.iter().rev().flat_map(|s| s.outputs.iter()).find(|f| f.path == path)
    }

    pub fn last(&self, stage: &str) -> Option<&StageEntry> {
        self.stages.iter().rev().find(|s| s.stage == stage)
    }
}
