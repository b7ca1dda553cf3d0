//! Run manifests and the output directory they describe.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use selmask::{Error, Result};

use crate::settings::Settings;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    /// Every resolved setting, enough to run the command again.
    pub config: BTreeMap<String, String>,
    /// Input path to SHA-256.
    pub inputs: BTreeMap<String, String>,
    /// Output file name (inside the output directory) to SHA-256.
    pub outputs: BTreeMap<String, String>,
    #[serde(default)]
    pub summary: serde_json::Value,
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_bytes(&bytes))
}

/// Book-keeping for one command: validated inputs, the output directory
/// and the files written into it.
pub struct Run {
    pub settings: Settings,
    pub out: PathBuf,
    inputs: Vec<PathBuf>,
    outputs: Vec<String>,
}

impl Run {
    /// Checks that every input exists and that the output directory does
    /// not hold any of them, then creates the output directory.
    pub fn start(settings: Settings, inputs: Vec<PathBuf>) -> Result<Self> {
        for p in &inputs {
            if !p.is_file() {
                return Err(Error::usage(format!("input file {} does not exist", p.display())));
            }
        }
        let out = settings.path("out")?;
        if out.is_file() {
            return Err(Error::usage(format!("--out {} is a file, expected a directory", out.display())));
        }
        if out.is_dir() {
            let out_abs = out.canonicalize().map_err(|e| Error::io(&out, e))?;
            for p in &inputs {
                let abs = p.canonicalize().map_err(|e| Error::io(p, e))?;
                if abs.starts_with(&out_abs) {
                    return Err(Error::usage(format!(
                        "input {} lives in the output directory {}",
                        p.display(),
                        out.display()
                    )));
                }
            }
        }
        fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        Ok(Run {
            settings,
            out,
            inputs,
            outputs: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        let p = self.path(name);
        fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
        self.record(name);
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format(e.to_string()))?;
        text.push('\n');
        self.write(name, text)
    }

    /// Registers a file written by other code.
    pub fn record(&mut self, name: &str) {
        if !self.outputs.iter().any(|o| o == name) {
            self.outputs.push(name.to_string());
        }
    }

    pub fn finish(self, summary: serde_json::Value) -> Result<Manifest> {
        let mut inputs = BTreeMap::new();
        for p in &self.inputs {
            inputs.insert(p.display().to_string(), sha256_file(p)?);
        }
        if let Some(prev) = &self.settings.previous {
            for (p, h) in &inputs {
                if prev.inputs.get(p).is_some_and(|old| old != h) {
                    log::warn!("input {p} changed since the manifest was written");
                }
            }
        }
        let mut outputs = BTreeMap::new();
        for name in &self.outputs {
            outputs.insert(name.clone(), sha256_file(&self.path(name))?);
        }
        let manifest = Manifest {
            command: self.settings.command.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.settings.seed()?,
            config: self.settings.values().clone(),
            inputs,
            outputs,
            summary,
        };
        let p = self.path(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::format(e.to_string()))?;
        text.push('\n');
        fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        Ok(manifest)
    }
}
