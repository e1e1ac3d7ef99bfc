use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use stablepp::sampler::Truncation;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Serialize)]
pub struct OutputEntry {
    /// File name relative to the directory of `--out`.
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

/// Everything needed to reproduce a run with the same binary. Contains no
/// wall-clock or host data so that repeated runs are byte-identical.
#[derive(Debug, Default, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_file: Option<String>,
    pub config_sha256: Option<String>,
    pub config: Option<serde_json::Value>,
    pub spec_sha256: Option<String>,
    pub master_seed: u64,
    pub reps: Option<u64>,
    pub level: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncations: Option<Vec<Truncation>>,
    pub exit_code: i32,
    pub status: &'static str,
    pub error: Option<String>,
    pub outputs: Vec<OutputEntry>,
}

impl Manifest {
    pub fn new(command: impl Into<String>, master_seed: u64) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.into(),
            master_seed,
            status: "error",
            exit_code: 1,
            ..Default::default()
        }
    }
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}
