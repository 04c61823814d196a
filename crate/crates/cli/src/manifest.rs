use std::path::Path;

use anyhow::Result;
use serde::{Deserialize, Serialize};

/// Written into every output directory. `plan` is the fully resolved
/// command configuration, so `replay` needs nothing else.
#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub plan: serde_json::Value,
}

pub fn write<T: Serialize>(dir: &Path, command: &str, seed: Option<u64>, plan: &T) -> Result<()> {
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        seed,
        plan: serde_json::to_value(plan)?,
    };
    crate::output::write_json(&dir.join("manifest.json"), &manifest)
}
