use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::io::write_json;

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Written as `manifest.json` next to every command's outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub arguments: Vec<String>,
    pub config: Value,
    pub seed: Option<u64>,
    pub version: String,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
    /// Wall-clock seconds; the only field that differs between reruns.
    pub duration_seconds: f64,
}

pub fn digest_file(path: &Path) -> Result<InputDigest> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let hash = Sha256::digest(&bytes);
    Ok(InputDigest {
        path: path.display().to_string(),
        sha256: hash.iter().map(|b| format!("{b:02x}")).collect(),
        bytes: bytes.len() as u64,
    })
}

pub struct ManifestBuilder {
    command: String,
    arguments: Vec<String>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn start(command: &str) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            arguments: std::env::args().skip(1).collect(),
            started: Instant::now(),
        }
    }

    pub fn finish(
        self,
        dir: &Path,
        config: Value,
        seed: Option<u64>,
        inputs: Vec<InputDigest>,
        outputs: &[std::path::PathBuf],
    ) -> Result<()> {
        let manifest = RunManifest {
            command: self.command,
            arguments: self.arguments,
            config,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            inputs,
            outputs: outputs
                .iter()
                .map(|p| p.file_name().map_or_else(|| p.display().to_string(), |f| f.to_string_lossy().into_owned()))
                .collect(),
            duration_seconds: self.started.elapsed().as_secs_f64(),
        };
        write_json(&dir.join("manifest.json"), &manifest)
    }
}
