use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Provenance record written next to every command output.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    pub version: String,
    pub wall_time_ns: u64,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            config,
            inputs: Vec::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_ns: 0,
        }
    }

    /// Records the digest of the raw bytes that were loaded from `path`.
    pub fn add_input(&mut self, path: &Path, bytes: &[u8]) {
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
        });
    }

    /// `<out>.manifest.json` when an output file is given, stderr otherwise.
    pub fn emit(&self, out: Option<&Path>) -> std::io::Result<()> {
        let json = serde_json::to_string(self).expect("manifest serializes");
        match out {
            Some(path) => fs::write(manifest_path(path), json + "\n"),
            None => writeln!(std::io::stderr(), "{json}"),
        }
    }
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}
