use std::path::Path;

use forcerl_core::Config;
use serde::{Deserialize, Serialize};

use crate::{io_err, CliError};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CONFIG_FILE: &str = "config.toml";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const FINAL_CHECKPOINT: &str = "checkpoint_final.json";
pub const FINAL_REPORT: &str = "final_eval.json";
pub const SNAPSHOT_FILE: &str = "nonfinite_snapshot.json";

/// Version of the metrics.csv column layout.
pub const METRICS_FORMAT: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Layout {
    pub config: String,
    pub metrics: String,
    pub metrics_format: u32,
    pub checkpoints: String,
    pub final_checkpoint: String,
    pub final_report: String,
}

impl Default for Layout {
    fn default() -> Self {
        Self {
            config: CONFIG_FILE.into(),
            metrics: METRICS_FILE.into(),
            metrics_format: METRICS_FORMAT,
            checkpoints: CHECKPOINT_DIR.into(),
            final_checkpoint: FINAL_CHECKPOINT.into(),
            final_report: FINAL_REPORT.into(),
        }
    }
}

/// Everything needed to reproduce a run directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub variant: String,
    pub seed: u64,
    pub config_hash: String,
    pub total_env_steps: usize,
    pub defaulted_sections: Vec<String>,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub epochs_completed: usize,
    pub status: String,
    pub layout: Layout,
    pub config: Config,
}

impl RunManifest {
    pub fn new(config: &Config, defaulted: Vec<String>) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").into(),
            variant: config.experiment.variant.clone(),
            seed: config.train.seed,
            config_hash: config.content_hash(),
            total_env_steps: config.total_steps(),
            defaulted_sections: defaulted,
            started_at: now(),
            finished_at: None,
            epochs_completed: 0,
            status: "running".into(),
            layout: Layout::default(),
            config: config.clone(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        std::fs::write(&path, text).map_err(|e| io_err(&path, e))
    }

    pub fn read(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
    }
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}
