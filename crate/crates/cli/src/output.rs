use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use tempfile::NamedTempFile;

use crate::error::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::data("io", format!("{}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Serialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct OutputRecord {
    pub file: String,
    pub sha256: String,
}

/// Everything needed to rerun a command and check its outputs.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: serde_json::Value,
    pub config_sha256: String,
    pub seed: u64,
    pub inputs: Vec<InputRecord>,
    pub scorers: BTreeMap<String, String>,
    pub outputs: Vec<OutputRecord>,
}

impl Manifest {
    pub fn new(command: &str, config: serde_json::Value, seed: u64) -> Self {
        let config_sha256 = sha256_hex(config.to_string().as_bytes());
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config,
            config_sha256,
            seed,
            inputs: Vec::new(),
            scorers: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        self.inputs.push(InputRecord {
            path: path.display().to_string(),
            sha256: hash_file(path)?,
        });
        Ok(())
    }

    pub fn scorer(&mut self, role: &str, identity: Option<String>) {
        if let Some(id) = identity {
            self.scorers.insert(role.to_string(), id);
        }
    }
}

/// Files written together: staged as temporaries beside their targets and
/// renamed into place only when every stage succeeded.
#[derive(Default)]
pub struct OutputSet {
    staged: Vec<(PathBuf, Vec<u8>)>,
}

impl OutputSet {
    pub fn add(&mut self, path: impl Into<PathBuf>, bytes: Vec<u8>) {
        self.staged.push((path.into(), bytes));
    }

    pub fn add_json<T: Serialize>(&mut self, path: impl Into<PathBuf>, value: &T) {
        let mut bytes = serde_json::to_vec_pretty(value).expect("reports serialize");
        bytes.push(b'\n');
        self.add(path, bytes);
    }

    /// Adds `<primary>.manifest.json` listing the staged outputs, then commits.
    pub fn commit_with_manifest(mut self, primary: &Path, mut manifest: Manifest) -> Result<(), CliError> {
        manifest.outputs = self
            .staged
            .iter()
            .map(|(p, b)| OutputRecord {
                file: p
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default(),
                sha256: sha256_hex(b),
            })
            .collect();
        let mut name = primary.as_os_str().to_owned();
        name.push(".manifest.json");
        self.add_json(PathBuf::from(name), &manifest);
        self.commit()
    }

    pub fn commit(self) -> Result<(), CliError> {
        let io_err = |p: &Path, e: std::io::Error| CliError::data("io", format!("{}: {e}", p.display()));
        let mut temps = Vec::with_capacity(self.staged.len());
        for (path, bytes) in &self.staged {
            let dir = match path.parent() {
                Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
                _ => PathBuf::from("."),
            };
            let mut tmp = NamedTempFile::new_in(&dir).map_err(|e| io_err(path, e))?;
            tmp.write_all(bytes)
                .and_then(|_| tmp.flush())
                .map_err(|e| io_err(path, e))?;
            temps.push((path, tmp));
        }
        let mut done: Vec<&PathBuf> = Vec::new();
        for (path, tmp) in temps {
            if let Err(e) = tmp.persist(path) {
                for p in done {
                    let _ = std::fs::remove_file(p);
                }
                return Err(io_err(path, e.error));
            }
            done.push(path);
        }
        Ok(())
    }
}
