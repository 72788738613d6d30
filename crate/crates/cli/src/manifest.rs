//! `manifest.json`: enough to rerun a command bit-for-bit.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use netsynth::schema::Dataset;
use netsynth::Error;

#[derive(Debug, Serialize)]
pub struct Input {
    pub role: String,
    pub path: PathBuf,
    /// Content hash for datasets, SHA-256 of the bytes for files.
    pub hash: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub args: Vec<String>,
    pub code_version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: Vec<Input>,
    pub outputs: Vec<PathBuf>,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config: &impl Serialize) -> Result<Self, Error> {
        Ok(Self {
            command: command.to_string(),
            args: std::env::args().collect(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config: serde_json::to_value(config)?,
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn dataset(&mut self, role: &str, path: &Path, ds: &Dataset) {
        self.inputs.push(Input { role: role.into(), path: path.to_path_buf(), hash: ds.content_hash() });
    }

    pub fn file(&mut self, role: &str, path: &Path) -> Result<(), Error> {
        let bytes = std::fs::read(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        self.inputs.push(Input { role: role.into(), path: path.to_path_buf(), hash: hex::encode(Sha256::digest(&bytes)) });
        Ok(())
    }

    pub fn output(&mut self, path: impl Into<PathBuf>) {
        self.outputs.push(path.into());
    }

    pub fn write(&self, dir: &Path) -> Result<(), Error> {
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(self)?).map_err(|source| Error::Io { path, source })
    }
}
