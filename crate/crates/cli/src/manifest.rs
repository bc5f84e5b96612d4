//! Run manifests written next to every output.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::args::Command;
use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub inputs: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub tool_version: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    /// Every flag of the run, defaults included.
    pub flags: Command,
}

impl RunManifest {
    pub fn new(command: &Command) -> Self {
        let mut c = command.clone();
        RunManifest {
            command: command.name().to_string(),
            inputs: c.inputs_mut().into_iter().map(|p| p.clone()).collect(),
            seed: command.seed(),
            out: command.out_dir().cloned().unwrap_or_default(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            flags: command.clone(),
        }
    }

    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let text = toml::to_string(self).map_err(|e| CliError::Io(format!("cannot serialize manifest: {e}")))?;
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }
}
