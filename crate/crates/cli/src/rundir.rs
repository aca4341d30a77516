//! Output directories. Every file a command writes is recorded and listed
//! with its size and SHA-256 in `manifest.json`.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{RunConfig, CONFIG_FILE};
use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub files: Vec<ManifestEntry>,
}

pub struct RunDir {
    root: PathBuf,
    command: String,
    files: BTreeSet<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl RunDir {
    pub fn create(root: &Path, command: &str) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self { root: root.to_path_buf(), command: command.to_string(), files: BTreeSet::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Path of `name` inside the directory, recorded for the manifest.
    pub fn file(&mut self, name: &str) -> PathBuf {
        self.files.insert(name.to_string());
        self.root.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> CliResult<PathBuf> {
        let p = self.file(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        fs::write(&p, bytes).map_err(|e| CliError::io(&p, e))?;
        Ok(p)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text)
    }

    pub fn write_config(&mut self, cfg: &RunConfig) -> CliResult<PathBuf> {
        self.write(CONFIG_FILE, cfg.to_toml()?)
    }

    /// Writes `manifest.json` over every recorded file that exists.
    pub fn finish(self) -> CliResult<Manifest> {
        let mut files = Vec::new();
        for name in &self.files {
            let p = self.root.join(name);
            if !p.is_file() {
                continue;
            }
            let bytes = fs::read(&p).map_err(|e| CliError::io(&p, e))?;
            files.push(ManifestEntry { name: name.clone(), bytes: bytes.len() as u64, sha256: sha256_hex(&bytes) });
        }
        let manifest = Manifest { command: self.command, files };
        let p = self.root.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(&p, text).map_err(|e| CliError::io(&p, e))?;
        Ok(manifest)
    }
}
