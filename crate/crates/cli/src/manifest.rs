use std::collections::BTreeMap;
use std::path::Path;

use flatflow::flow::{FlowConfig, RunSummary};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_digest(path: &Path) -> std::io::Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

#[derive(Clone, Debug, Serialize)]
pub struct ExitStatus {
    pub code: i32,
    /// `completed`, `halted` or `error`
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

/// Everything needed to reproduce and audit one invocation. Nothing in here
/// depends on the clock or the machine, so identical runs give identical bytes.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: FlowConfig,
    pub overrides: Vec<String>,
    /// SHA-256 of every input file, keyed by role.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 of every file written under `--out`, keyed by file name.
    pub outputs: BTreeMap<String, String>,
    pub exit: ExitStatus,
    pub summary: Option<RunSummary>,
}

impl RunManifest {
    pub fn new(command: &str, config: FlowConfig, overrides: Vec<String>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config,
            overrides,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            exit: ExitStatus {
                code: 0,
                status: "completed".into(),
                message: None,
            },
            summary: None,
        }
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        text.push('\n');
        std::fs::write(dir.join("manifest.json"), text)
    }
}
