use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context as _;
use serde::{Deserialize, Serialize};

pub const FILE: &str = "manifest.json";

static ARGS: OnceLock<Vec<String>> = OnceLock::new();

/// Arguments to record instead of the process arguments, for reruns.
pub fn set_args(args: Vec<String>) {
    let _ = ARGS.set(args);
}

/// Record of one command invocation, written next to its outputs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name, enough to repeat the run.
    pub args: Vec<String>,
    /// Fully resolved configuration after flags were applied.
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub datasets: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub version: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            command: command.into(),
            args: ARGS
                .get()
                .cloned()
                .unwrap_or_else(|| std::env::args().skip(1).collect()),
            config,
            seeds: Vec::new(),
            datasets: Vec::new(),
            outputs: Vec::new(),
            version: env!("CARGO_PKG_VERSION").into(),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(FILE);
        std::fs::write(&path, serde_json::to_string_pretty(self)?)
            .with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}
