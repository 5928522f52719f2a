use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything needed to re-run the job that produced an output directory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub seed: u64,
    pub dataset_root: Option<PathBuf>,
    pub config: serde_json::Value,
    pub version: String,
    pub started_at: String,
    pub finished_at: Option<String>,
}

pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "-", env!("VEINSEG_GIT_DESCRIBE"));

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn start(command: &str, seed: u64, dataset_root: Option<&Path>, config: serde_json::Value) -> Self {
        RunManifest {
            command: command.to_string(),
            args: std::env::args().collect(),
            seed,
            dataset_root: dataset_root.map(Path::to_path_buf),
            config,
            version: VERSION.to_string(),
            started_at: now(),
            finished_at: None,
        }
    }

    /// Writes (or overwrites) `<dir>/manifest.json`.
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::io(&path, e))?;
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }

    pub fn finish(mut self, dir: &Path) -> Result<(), CliError> {
        self.finished_at = Some(now());
        self.write(dir)
    }
}
