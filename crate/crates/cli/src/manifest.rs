//! Run manifests: everything needed to reproduce a command's outputs bit
//! for bit — subcommand, normalized parameters, seed, input hashes and the
//! produced files. Thread counts and timings are deliberately absent;
//! they do not influence outputs.

use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use chemdim_core::error::{ChemdimError, Result};
use chemdim_core::io::write_json;

#[derive(Serialize)]
struct InputRecord {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
pub struct RunManifest {
    command: String,
    version: String,
    seed: Option<u64>,
    params: serde_json::Value,
    inputs: Vec<InputRecord>,
    outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, params: serde_json::Value, seed: Option<u64>) -> Self {
        RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            params,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(mut self, path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| ChemdimError::io(path.display().to_string(), e))?;
        let digest = Sha256::digest(&bytes);
        let mut hex = String::with_capacity(64);
        for b in digest {
            hex.push_str(&format!("{b:02x}"));
        }
        self.inputs.push(InputRecord { path: path.display().to_string(), sha256: hex });
        Ok(self)
    }

    /// Record output paths relative to the output directory.
    pub fn outputs(mut self, base: &Path, paths: &[&Path]) -> Self {
        for p in paths {
            let shown = p.strip_prefix(base).unwrap_or(p);
            self.outputs.push(shown.display().to_string());
        }
        self
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}
