//! Learning-rate schedule: constant through `decay_start_epoch`, then
//! linear to zero at the final epoch.

use crate::error::{Error, Result};

use super::TrainConfig;

pub fn lr_schedule(epoch: usize, cfg: &TrainConfig) -> Result<f64> {
    if epoch == 0 || epoch > cfg.epochs {
        return Err(Error::Config(format!(
            "epoch {epoch} outside 1..={}",
            cfg.epochs
        )));
    }
    if epoch <= cfg.decay_start_epoch || cfg.epochs == cfg.decay_start_epoch {
        return Ok(cfg.base_lr);
    }
    let remaining = (cfg.epochs - epoch) as f64;
    let span = (cfg.epochs - cfg.decay_start_epoch) as f64;
    Ok(cfg.base_lr * remaining / span)
}
