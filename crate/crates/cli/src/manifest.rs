//! Run manifests: enough metadata to reproduce any command byte-for-byte.
//! No timestamps, no hostnames; content hashes only.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

pub const ARTIFACT_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub command: String,
    pub flags: BTreeMap<String, String>,
    pub seed: Option<u64>,
    /// sha256 hex digests of the input files, keyed by file name.
    pub input_hashes: BTreeMap<String, String>,
    /// Paths relative to the output directory.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(
        command: &str,
        flags: BTreeMap<String, String>,
        seed: Option<u64>,
        input_hashes: BTreeMap<String, String>,
        outputs: Vec<String>,
    ) -> Self {
        RunManifest {
            artifact_version: ARTIFACT_VERSION.to_string(),
            command: command.to_string(),
            flags,
            seed,
            input_hashes,
            outputs,
        }
    }

    pub fn write(&self, out_dir: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(out_dir.join("manifest.json"), text)
    }
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let bytes = std::fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}
