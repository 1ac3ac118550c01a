use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QaError, Result};
use crate::scalar::Scalar;
use crate::volgrid::{Voxel, VoxelGrid};

/// Post-hoc temperature applied to two-class logits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureConfig {
    pub temperature: f64,
    pub enabled: bool,
}

impl Default for TemperatureConfig {
    fn default() -> Self {
        TemperatureConfig {
            temperature: 3.0,
            enabled: false,
        }
    }
}

impl TemperatureConfig {
    pub fn enabled(temperature: f64) -> Self {
        TemperatureConfig {
            temperature,
            enabled: true,
        }
    }

    pub fn disabled() -> Self {
        TemperatureConfig::default()
    }

    /// Temperature actually applied: `T` when enabled, 1 otherwise.
    pub fn effective(&self) -> f64 {
        if self.enabled {
            self.temperature
        } else {
            1.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(QaError::invalid(format!(
                "temperature must be positive and finite, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// Foreground probability of a two-class softmax at temperature `t`.
///
/// The hard label always equals the logit argmax (ties to foreground), even
/// where rounding would otherwise land exactly on 0.5.
#[inline]
pub fn foreground_probability<F: Scalar>(bg: F, fg: F, t: F) -> F {
    let m = bg.max(fg);
    let e_bg = ((bg - m) / t).exp();
    let e_fg = ((fg - m) / t).exp();
    let p = e_fg / (e_bg + e_fg);
    if fg < bg {
        p.min(F::below_half())
    } else {
        p
    }
}

/// Channel 1 (foreground) probability of 2-channel logits at the configured temperature.
pub fn temperature_softmax<F: Scalar + Voxel>(
    logits: &VoxelGrid<F>,
    cfg: &TemperatureConfig,
) -> Result<VoxelGrid<F>> {
    logits.expect_channels(2)?;
    cfg.validate()?;
    logits.ensure_finite("logits")?;
    let t = F::of(cfg.effective());
    let data = logits
        .channel(0)
        .par_iter()
        .zip(logits.channel(1).par_iter())
        .map(|(&bg, &fg)| foreground_probability(bg, fg, t))
        .collect();
    Ok(logits.like(data))
}
