//! Run manifests: what went in, what came out, under which configuration.
//! No timestamps or absolute paths, so identical runs give identical bytes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::settings::Settings;
use crate::{data, CliError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileDigest {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub counts: BTreeMap<String, u64>,
}

pub fn digest(path: &Path) -> Result<FileDigest, CliError> {
    let bytes = std::fs::read(path).map_err(|e| data(format!("cannot read `{}`: {e}", path.display())))?;
    Ok(FileDigest {
        name: path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

impl Manifest {
    pub fn new(command: &str, settings: &Settings) -> Self {
        Self {
            command: command.into(),
            config_hash: settings.hash(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            counts: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<&mut Self, CliError> {
        self.inputs.push(digest(path)?);
        Ok(self)
    }

    pub fn output(&mut self, path: &Path) -> Result<&mut Self, CliError> {
        self.outputs.push(digest(path)?);
        Ok(self)
    }

    pub fn count(&mut self, key: &str, n: usize) -> &mut Self {
        self.counts.insert(key.into(), n as u64);
        self
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).map_err(data)? + "\n";
        std::fs::write(path, text).map_err(|e| data(format!("cannot write `{}`: {e}", path.display())))
    }

    /// Prints the counts as `key: n` lines.
    pub fn print_counts(&self) {
        for (k, v) in &self.counts {
            println!("{k}: {v}");
        }
    }
}
