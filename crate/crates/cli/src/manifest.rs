use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Result;
use serde::Serialize;

pub const MANIFEST_NAME: &str = "run_manifest.json";

/// Provenance of one command run, written next to its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command_line: Vec<String>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    /// Unix seconds at start; `SOURCE_DATE_EPOCH` pins it for reproducible
    /// runs.
    pub wall_clock_unix: u64,
}

pub fn wall_clock() -> u64 {
    if let Some(t) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.trim().parse().ok()) {
        return t;
    }
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn display(paths: &[PathBuf]) -> Vec<String> {
    paths.iter().map(|p| p.display().to_string()).collect()
}

pub fn write(
    dir: &Path,
    config: serde_json::Value,
    seed: Option<u64>,
    inputs: &[PathBuf],
    outputs: &[PathBuf],
    started: u64,
) -> Result<()> {
    let m = RunManifest {
        tool: "primfit".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command_line: std::env::args().collect(),
        config,
        seed,
        inputs: display(inputs),
        outputs: display(outputs),
        wall_clock_unix: started,
    };
    primfit::io::write_json(&dir.join(MANIFEST_NAME), &m)?;
    Ok(())
}
