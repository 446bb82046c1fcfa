//! Run manifests: the resolved configuration, seeds and input checksums of
//! every command that wrote into a directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    /// Keyed by the primary output's file name.
    pub runs: BTreeMap<String, RunRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    /// Input path to lowercase hex SHA-256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Adds or replaces one run in `dir/manifest.json`. An unreadable existing
/// manifest is replaced.
pub fn record_run(dir: &Path, key: &str, run: RunRecord) -> Result<()> {
    let path = dir.join(MANIFEST_NAME);
    let mut manifest: Manifest = fs::read_to_string(&path)
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok())
        .unwrap_or_default();
    manifest.tool_version = env!("CARGO_PKG_VERSION").to_string();
    manifest.runs.insert(key.to_string(), run);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}
