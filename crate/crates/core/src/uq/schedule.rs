//! Cyclical learning-rate schedule and checkpoint policy for checkpoint
//! ensembles, exported for an external trainer.

use serde::{Deserialize, Serialize};

use crate::error::{QaError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CyclicalLrConfig {
    pub total_epochs: usize,
    pub cycle_length: usize,
    /// Restart rate at the first epoch of each cycle.
    pub alpha_restart: f64,
    pub alpha_base: f64,
    /// Fraction of the cycle after which the rate stops decaying.
    pub gamma: f64,
    pub decay_exponent: f64,
    /// Checkpoints saved at the end of each cycle, one per epoch.
    pub checkpoints_per_cycle_tail: usize,
    pub inference_subset_size: usize,
}

impl Default for CyclicalLrConfig {
    fn default() -> Self {
        CyclicalLrConfig {
            total_epochs: 1200,
            cycle_length: 400,
            alpha_restart: 0.1,
            alpha_base: 0.01,
            gamma: 0.8,
            decay_exponent: 0.9,
            checkpoints_per_cycle_tail: 10,
            inference_subset_size: 5,
        }
    }
}

impl CyclicalLrConfig {
    pub fn cycles(&self) -> usize {
        self.total_epochs / self.cycle_length
    }

    pub fn validate(&self) -> Result<()> {
        if self.cycle_length == 0 || self.total_epochs == 0 {
            return Err(QaError::invalid("epochs and cycle length must be positive"));
        }
        if self.total_epochs % self.cycle_length != 0 {
            return Err(QaError::invalid(format!(
                "total epochs {} not divisible by cycle length {}",
                self.total_epochs, self.cycle_length
            )));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(QaError::invalid("gamma must lie in (0, 1]"));
        }
        if !(self.decay_exponent > 0.0) {
            return Err(QaError::invalid("decay exponent must be positive"));
        }
        if self.checkpoints_per_cycle_tail > self.cycle_length {
            return Err(QaError::invalid("checkpoint tail longer than a cycle"));
        }
        if self.inference_subset_size > self.cycles() * self.checkpoints_per_cycle_tail {
            return Err(QaError::invalid("inference subset larger than checkpoint pool"));
        }
        Ok(())
    }
}

/// Learning rate at epoch `t`.
pub fn lr_schedule(t: usize, cfg: &CyclicalLrConfig) -> Result<f64> {
    cfg.validate()?;
    if t >= cfg.total_epochs {
        return Err(QaError::invalid(format!(
            "epoch {t} outside [0, {})",
            cfg.total_epochs
        )));
    }
    let tc = t % cfg.cycle_length;
    if tc == 0 {
        return Ok(cfg.alpha_restart);
    }
    let period = cfg.cycle_length as f64;
    let progress = (tc as f64).min(cfg.gamma * period) / period;
    Ok(cfg.alpha_base * (1.0 - progress).powf(cfg.decay_exponent))
}

/// Epochs at which a checkpoint is saved: the last
/// `checkpoints_per_cycle_tail` epochs of every cycle.
pub fn checkpoint_epochs(cfg: &CyclicalLrConfig) -> Result<Vec<usize>> {
    cfg.validate()?;
    let tail = cfg.checkpoints_per_cycle_tail;
    Ok((1..=cfg.cycles())
        .flat_map(|c| {
            let end = c * cfg.cycle_length;
            end - tail..end
        })
        .collect())
}

/// Checkpoints averaged at inference: the last `inference_subset_size` saved.
pub fn inference_checkpoints(cfg: &CyclicalLrConfig) -> Result<Vec<usize>> {
    let all = checkpoint_epochs(cfg)?;
    let k = cfg.inference_subset_size;
    Ok(all[all.len() - k..].to_vec())
}
