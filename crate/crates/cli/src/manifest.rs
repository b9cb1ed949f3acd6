//! Run records and atomic file output.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct InputFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    /// Every resolved setting, flags and config file merged over defaults.
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    pub inputs: Vec<InputFile>,
    pub outputs: Vec<String>,
    pub wall_clock_s: f64,
    pub version: String,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Collects the files of one run directory, then writes the manifest.
pub struct RunDir {
    dir: PathBuf,
    command: String,
    started: Instant,
    config: BTreeMap<String, String>,
    inputs: Vec<InputFile>,
    outputs: Vec<String>,
}

impl RunDir {
    pub fn create(dir: &Path, command: &str) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            command: command.to_string(),
            started: Instant::now(),
            config: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.config.insert(key.to_string(), value.to_string());
    }

    /// Adds every `key = value` line of a config block.
    pub fn set_block(&mut self, prefix: &str, block: &str) {
        for line in block.lines() {
            if let Some((k, v)) = line.split_once('=') {
                self.set(&format!("{prefix}{}", k.trim()), v.trim());
            }
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(InputFile { path: path.display().to_string(), sha256: sha256_file(path)? });
        Ok(())
    }

    /// Write to a temporary name and rename, so readers never see a partial
    /// file.
    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        write_atomic(&self.dir.join(name), contents)?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    pub fn finish(self, seed: u64) -> Result<()> {
        let manifest = RunManifest {
            command: self.command,
            argv: std::env::args().collect(),
            config: self.config,
            seed,
            inputs: self.inputs,
            outputs: self.outputs,
            wall_clock_s: self.started.elapsed().as_secs_f64(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        };
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        write_atomic(&self.dir.join("manifest.json"), &text)
    }
}

pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    fs::write(&tmp, contents).with_context(|| format!("cannot write {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("cannot rename to {}", path.display()))
}
