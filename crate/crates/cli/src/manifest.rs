//! Reproducibility manifest written next to every output.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Arguments after the program name, as given.
    pub argv: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Fully resolved parameters, defaults included.
    pub parameters: serde_json::Value,
    pub inputs: Vec<InputRecord>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, argv: &[String], parameters: serde_json::Value) -> Self {
        Manifest {
            tool: "rfid".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            argv: argv.to_vec(),
            seed: None,
            parameters,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    /// Records an input file with its size and SHA-256 digest.
    pub fn input(&mut self, path: &Path) -> anyhow::Result<()> {
        let data = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.push(InputRecord {
            path: path.display().to_string(),
            bytes: data.len() as u64,
            sha256: format!("{:x}", Sha256::digest(&data)),
        });
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }
}

/// `<dir>/manifest.json` for directory outputs, `<file>.manifest.json`
/// for single-file outputs.
pub fn manifest_path(out: &Path, is_dir: bool) -> PathBuf {
    if is_dir {
        out.join("manifest.json")
    } else {
        let mut s = out.as_os_str().to_owned();
        s.push(".manifest.json");
        PathBuf::from(s)
    }
}
