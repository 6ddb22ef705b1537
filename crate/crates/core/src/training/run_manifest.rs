//! Run manifest: an append-only JSONL epoch log written while training
//! plus a final JSON summary.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::networks::GeneratorConfig;

use super::TrainConfig;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub loss_d: f64,
    pub loss_g: f64,
    pub skipped_steps: usize,
    pub val_psnr: Option<f64>,
    pub val_ssim: Option<f64>,
    pub val_nrmse: Option<f64>,
    pub wall_secs: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub seed: u64,
    pub train_config: TrainConfig,
    pub generator_config: GeneratorConfig,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub epochs: Vec<EpochRecord>,
    pub checkpoints: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(train_config: &TrainConfig, generator_config: &GeneratorConfig) -> Self {
        Self {
            seed: train_config.seed,
            train_config: train_config.clone(),
            generator_config: generator_config.clone(),
            adam_beta1: super::ADAM_BETA1,
            adam_beta2: super::ADAM_BETA2,
            epochs: Vec::new(),
            checkpoints: Vec::new(),
        }
    }

    /// Append one epoch record to the in-memory history and the JSONL log.
    pub fn append_epoch(&mut self, log_path: &Path, record: EpochRecord) -> Result<()> {
        let line = serde_json::to_string(&record)
            .map_err(|e| Error::Config(format!("epoch record serialization: {e}")))?;
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(log_path)
            .map_err(|e| Error::io(log_path, e))?;
        writeln!(file, "{line}").map_err(|e| Error::io(log_path, e))?;
        self.epochs.push(record);
        Ok(())
    }

    pub fn write_summary(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("manifest serialization: {e}")))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn read_summary(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, format!("manifest: {e}")))
    }
}
