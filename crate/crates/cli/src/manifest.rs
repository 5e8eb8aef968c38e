use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::CliError;

pub const FILE_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to rerun a command and check its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub git_describe: String,
    /// `simulate`, `cf-train` or `cf-export`.
    pub command: String,
    pub seed: u64,
    /// Fully resolved configuration as TOML.
    pub config_toml: String,
    /// The same configuration as JSON, for reading.
    pub config: serde_json::Value,
    pub workers: usize,
    /// The config file as given; informational, since `config_toml` is what reruns use.
    pub config_file: Option<FileDigest>,
    /// Data files the run read. `--verify` refuses to run if any changed.
    pub inputs: Vec<FileDigest>,
    /// Output paths are relative to the run directory.
    pub outputs: Vec<FileDigest>,
    pub started_at: String,
    pub duration_secs: f64,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn digests(paths: &[PathBuf], relative_to: Option<&Path>) -> Result<Vec<FileDigest>, CliError> {
    paths
        .iter()
        .map(|p| {
            let shown = match relative_to {
                Some(base) => p.strip_prefix(base).unwrap_or(p),
                None => p.as_path(),
            };
            Ok(FileDigest {
                path: shown.to_string_lossy().into_owned(),
                sha256: sha256_file(p)?,
            })
        })
        .collect()
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join(FILE_NAME);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| CliError::Other(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read manifest {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("malformed manifest {}: {e}", path.display())))
    }
}

pub fn git_describe() -> &'static str {
    env!("MATCHSIM_GIT_DESCRIBE")
}
