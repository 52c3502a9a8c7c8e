//! Per-run records: the effective configuration, seeds, and SHA-256 digests
//! of every file read and written.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io::{read_json, write_json, FORMAT_VERSION};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub tool_version: String,
    /// Command-line arguments after the program name.
    pub command: Vec<String>,
    /// The effective configuration as TOML; replays use this text rather
    /// than re-reading any config file.
    pub config: String,
    pub config_sha256: String,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(path: &Path) -> Result<FileDigest> {
    let bytes = fs::read(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    Ok(FileDigest {
        path: path.to_string_lossy().into_owned(),
        sha256: sha256_hex(&bytes),
    })
}

impl Manifest {
    pub fn new(command: Vec<String>, config: String, seeds: BTreeMap<String, u64>) -> Self {
        Manifest {
            version: FORMAT_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command,
            config_sha256: sha256_hex(config.as_bytes()),
            config,
            seeds,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let m: Manifest = read_json(path)?;
        if m.version != FORMAT_VERSION {
            return Err(Error::Version {
                found: m.version,
                expected: FORMAT_VERSION,
            });
        }
        if sha256_hex(m.config.as_bytes()) != m.config_sha256 {
            return Err(Error::Format(format!("{}: embedded config does not match its hash", path.display())));
        }
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    /// Fails if any recorded input no longer has its recorded digest.
    pub fn check_inputs(&self) -> Result<()> {
        for f in &self.inputs {
            let now = digest_file(Path::new(&f.path))?;
            if now.sha256 != f.sha256 {
                return Err(Error::Format(format!("input {} changed since the recorded run", f.path)));
            }
        }
        Ok(())
    }

    /// Recorded outputs whose current digest differs.
    pub fn mismatched_outputs(&self) -> Result<Vec<String>> {
        let mut bad = Vec::new();
        for f in &self.outputs {
            if digest_file(Path::new(&f.path))?.sha256 != f.sha256 {
                bad.push(f.path.clone());
            }
        }
        Ok(bad)
    }
}
