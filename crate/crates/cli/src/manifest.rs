use std::fs;
use std::path::Path;
use std::process::Command;

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliResult;

pub const MANIFEST: &str = "manifest.json";

/// Provenance record written into every output directory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config_hash: Option<String>,
    pub seed: Option<u64>,
    pub git_describe: String,
    pub started: String,
    pub finished: Option<String>,
    /// `ok`, or the error that ended the command.
    pub status: String,
    pub outputs: Vec<String>,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// SHA-256 of the config's JSON encoding.
pub fn config_hash<T: Serialize>(config: &T) -> CliResult<String> {
    let bytes = serde_json::to_vec(config)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

pub fn git_describe() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".to_string())
}

impl RunManifest {
    pub fn begin(command: &str, config_hash: Option<String>, seed: Option<u64>) -> Self {
        Self {
            command: command.to_string(),
            args: std::env::args().skip(1).collect(),
            config_hash,
            seed,
            git_describe: git_describe(),
            started: now(),
            finished: None,
            status: "ok".to_string(),
            outputs: Vec::new(),
        }
    }

    pub fn failed(mut self, message: &str) -> Self {
        self.status = format!("failed: {message}");
        self
    }

    /// Stamps the end time and writes `manifest.json` into `dir`,
    /// replacing any earlier one.
    pub fn finish(mut self, dir: &Path, outputs: Vec<String>) -> CliResult<()> {
        self.finished = Some(now());
        self.outputs = outputs;
        fs::write(dir.join(MANIFEST), serde_json::to_vec_pretty(&self)?)?;
        Ok(())
    }
}
