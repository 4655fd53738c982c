//! Run directories, content hashes and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use heavyball::report::Table;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn unix_seconds() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileEntry {
    /// Path relative to the run directory, with `/` separators.
    pub path: String,
    pub sha256: String,
}

/// A run directory that records every file written into it.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: Vec<FileEntry>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self { root: root.to_path_buf(), files: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn files(&self) -> &[FileEntry] {
        &self.files
    }

    pub fn has(&self, path: &str) -> bool {
        self.files.iter().any(|f| f.path == path)
    }

    pub fn bytes(&mut self, path: &str, bytes: &[u8]) -> Result<()> {
        let full = self.root.join(path);
        if let Some(parent) = full.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&full, bytes)?;
        self.record(path, sha256_hex(bytes));
        Ok(())
    }

    pub fn text(&mut self, path: &str, text: &str) -> Result<()> {
        self.bytes(path, text.as_bytes())
    }

    pub fn table(&mut self, path: &str, table: &Table) -> Result<()> {
        self.text(path, &table.to_csv_string()?)
    }

    pub fn json(&mut self, path: &str, value: &impl Serialize) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.text(path, &text)
    }

    /// Records files written by a nested run under `prefix/`.
    pub fn adopt(&mut self, prefix: &str, files: &[FileEntry]) {
        for f in files {
            self.record(&format!("{prefix}/{}", f.path), f.sha256.clone());
        }
    }

    fn record(&mut self, path: &str, sha256: String) {
        self.files.retain(|f| f.path != path);
        self.files.push(FileEntry { path: path.to_string(), sha256 });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    /// Every certification in scope held.
    Passed,
    /// At least one certification in scope failed.
    Failed,
    /// The run only reports measurements; nothing is certified.
    Diagnostic,
}

impl Status {
    pub fn exit_code(self) -> u8 {
        match self {
            Status::Failed => 1,
            Status::Passed | Status::Diagnostic => 0,
        }
    }

    /// Combines the statuses of independent parts.
    pub fn combine(parts: impl IntoIterator<Item = Status>) -> Status {
        let mut any_pass = false;
        for s in parts {
            match s {
                Status::Failed => return Status::Failed,
                Status::Passed => any_pass = true,
                Status::Diagnostic => {}
            }
        }
        if any_pass {
            Status::Passed
        } else {
            Status::Diagnostic
        }
    }

    pub fn as_number(self) -> f64 {
        match self {
            Status::Passed => 1.0,
            Status::Failed => 0.0,
            Status::Diagnostic => f64::NAN,
        }
    }
}

/// Outcome of one experiment: overall status and headline scalars in a
/// fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub status: Status,
    pub metrics: Vec<(String, f64)>,
}

impl Outcome {
    pub fn new(status: Status) -> Self {
        Self { status, metrics: Vec::new() }
    }

    pub fn metric(mut self, name: &str, value: f64) -> Self {
        self.metrics.push((name.to_string(), value));
        self
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub experiment: &'a str,
    pub software_version: &'a str,
    pub config_sha256: String,
    pub seed: u64,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub status: Status,
    /// Headline scalars; non-finite values are written as `null`.
    pub metrics: serde_json::Map<String, serde_json::Value>,
    pub files: &'a [FileEntry],
}

pub fn metrics_json(metrics: &[(String, f64)]) -> serde_json::Map<String, serde_json::Value> {
    metrics.iter().map(|(k, v)| (k.clone(), serde_json::json!(v))).collect()
}
