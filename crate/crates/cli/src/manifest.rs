//! Run manifests.
//!
//! Every command that writes into a run directory leaves a
//! `manifest.json` beside its outputs. The manifest holds the argument
//! vector, the config file and seed in effect, and the SHA-256 of every
//! input and output file. It carries no timestamps, so re-running the
//! recorded arguments reproduces the manifest byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name, as given.
    pub args: Vec<String>,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
    /// Versions of the tool and of the on-disk formats it wrote.
    pub versions: BTreeMap<String, String>,
    /// Input path to SHA-256 hex.
    pub inputs: BTreeMap<String, String>,
    /// Output file name (relative to `out_dir`) to SHA-256 hex.
    pub outputs: BTreeMap<String, String>,
}

pub fn artifact_versions() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("crowdrl".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        (
            "ledger_log".to_string(),
            crowdrl_core::ledger::LOG_FORMAT.to_string(),
        ),
        (
            "content_id".to_string(),
            crowdrl_core::ContentId::PREFIX
                .trim_end_matches(':')
                .to_string(),
        ),
    ])
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Collects what a run read and wrote, then writes the manifest.
pub struct RunRecorder {
    manifest: RunManifest,
}

impl RunRecorder {
    pub fn new(command: &str, args: Vec<String>, out_dir: &Path) -> Result<Self> {
        fs::create_dir_all(out_dir)
            .with_context(|| format!("creating run directory {}", out_dir.display()))?;
        Ok(RunRecorder {
            manifest: RunManifest {
                command: command.to_string(),
                args,
                config: None,
                seed: None,
                out_dir: out_dir.to_path_buf(),
                versions: artifact_versions(),
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
            },
        })
    }

    pub fn out_dir(&self) -> &Path {
        &self.manifest.out_dir
    }

    pub fn config(&mut self, path: Option<&Path>) -> Result<()> {
        if let Some(p) = path {
            self.input(p)?;
            self.manifest.config = Some(p.to_path_buf());
        }
        Ok(())
    }

    pub fn seed(&mut self, seed: u64) {
        self.manifest.seed = Some(seed);
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let digest = sha256_file(path)?;
        self.manifest
            .inputs
            .insert(path.display().to_string(), digest);
        Ok(())
    }

    /// Writes `bytes` to `name` inside the run directory and records it.
    pub fn output(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.manifest.out_dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.manifest
            .outputs
            .insert(name.to_string(), hex::encode(Sha256::digest(bytes)));
        Ok(path)
    }

    /// Records a file some other writer already placed in the run directory.
    pub fn existing_output(&mut self, name: &str) -> Result<()> {
        let digest = sha256_file(&self.manifest.out_dir.join(name))?;
        self.manifest.outputs.insert(name.to_string(), digest);
        Ok(())
    }

    pub fn finish(self) -> Result<RunManifest> {
        let path = self.manifest.out_dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(self.manifest)
    }
}
