//! Provenance record written next to every output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub tool_version: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<FileDigest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects inputs as they are read and outputs as they are written.
#[derive(Debug)]
pub struct Run {
    manifest: RunManifest,
}

impl Run {
    pub fn new(seed: Option<u64>) -> Self {
        Run {
            manifest: RunManifest {
                command: std::env::args().skip(1).collect(),
                tool_version: env!("CARGO_PKG_VERSION"),
                config: None,
                seed,
                inputs: Vec::new(),
                outputs: Vec::new(),
            },
        }
    }

    pub fn read_input(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = fs::read(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
        self.manifest.inputs.push(digest(path, &bytes));
        Ok(bytes)
    }

    pub fn read_config(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = fs::read(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
        self.manifest.config = Some(digest(path, &bytes));
        Ok(bytes)
    }

    pub fn write_output(&mut self, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
        write_atomic(path, bytes)?;
        self.manifest.outputs.push(digest(path, bytes));
        Ok(())
    }

    /// Writes the manifest itself to `path`.
    pub fn finish(self, path: &Path) -> Result<RunManifest, CliError> {
        let mut text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        text.push('\n');
        write_atomic(path, text.as_bytes())?;
        Ok(self.manifest)
    }
}

fn digest(path: &Path, bytes: &[u8]) -> FileDigest {
    FileDigest { path: path.display().to_string(), sha256: sha256_hex(bytes) }
}

/// Write to a sibling temporary file, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).map_err(|e| CliError::env(format!("cannot create {}: {e}", dir.display())))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| CliError::env(format!("cannot write in {}: {e}", dir.display())))?;
    tmp.write_all(bytes).map_err(|e| CliError::env(e.to_string()))?;
    tmp.as_file().sync_all().map_err(|e| CliError::env(e.to_string()))?;
    tmp.persist(path).map_err(|e| CliError::env(format!("cannot write {}: {}", path.display(), e.error)))?;
    Ok(())
}
