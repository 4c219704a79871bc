use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    /// Path relative to the output directory, `/`-separated.
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub software: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub threads: usize,
    pub config: BTreeMap<String, BTreeMap<String, String>>,
    /// Hash of the effective configuration text.
    pub config_sha256: String,
    pub outputs: Vec<OutputEntry>,
    pub timings: Vec<StageTiming>,
    pub status: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(dir: &Path, rel: &str) -> std::io::Result<OutputEntry> {
    let bytes = fs::read(dir.join(rel))?;
    Ok(OutputEntry {
        file: rel.to_string(),
        sha256: sha256_hex(&bytes),
        bytes: bytes.len() as u64,
    })
}

/// A file whose current hash differs from the manifest, or that is gone.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mismatch {
    pub file: String,
    pub expected: String,
    pub found: Option<String>,
}

/// Recompute every hash listed in `dir/manifest.json`.
pub fn verify(dir: &Path) -> Result<Vec<Mismatch>, String> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE))
        .map_err(|e| format!("cannot read {}: {e}", dir.join(MANIFEST_FILE).display()))?;
    let manifest: RunManifest =
        serde_json::from_str(&text).map_err(|e| format!("malformed manifest: {e}"))?;
    Ok(manifest
        .outputs
        .iter()
        .filter_map(|o| {
            let found = hash_file(dir, &o.file).ok().map(|e| e.sha256);
            (found.as_deref() != Some(o.sha256.as_str())).then(|| Mismatch {
                file: o.file.clone(),
                expected: o.sha256.clone(),
                found,
            })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
