use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Machine-readable record of one run. Contains no timestamps or host
/// details, so identical inputs and flags give byte-identical files.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub tool_version: &'static str,
    pub command: &'static str,
    pub parameters: Value,
    pub input_digest: String,
    pub outputs: Value,
    pub warnings: Vec<String>,
}

impl RunReport {
    pub fn new(command: &'static str, parameters: impl Serialize, inputs: &Inputs) -> Self {
        RunReport {
            tool_version: env!("CARGO_PKG_VERSION"),
            command,
            parameters: serde_json::to_value(parameters).expect("parameters serialize"),
            input_digest: inputs.digest(),
            outputs: Value::Null,
            warnings: Vec::new(),
        }
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        fs::write(path, text)
    }
}

/// Raw bytes of every file a command read, hashed in the order they were added.
#[derive(Debug, Default)]
pub struct Inputs {
    hasher: Sha256,
}

impl Inputs {
    pub fn read(&mut self, role: &str, path: &Path) -> std::io::Result<Vec<u8>> {
        let bytes = fs::read(path)?;
        self.hasher.update(role.as_bytes());
        self.hasher.update((bytes.len() as u64).to_le_bytes());
        self.hasher.update(&bytes);
        Ok(bytes)
    }

    pub fn digest(&self) -> String {
        format!("sha256:{}", hex::encode(self.hasher.clone().finalize()))
    }
}
