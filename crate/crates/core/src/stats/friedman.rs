use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::midranks;
use crate::error::{QaError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Friedman test on a patients × methods table (rows are blocks).
///
/// Ranks are taken within each row with mid-ranks for ties and the χ²
/// statistic is divided by the usual tie correction.
pub fn friedman(rows: &[Vec<f64>]) -> Result<FriedmanResult> {
    let n = rows.len();
    let k = rows.first().map_or(0, Vec::len);
    if n < 2 || k < 2 {
        return Err(QaError::invalid(format!(
            "friedman needs at least 2 patients and 2 methods, got {n}x{k}"
        )));
    }
    if rows.iter().any(|r| r.len() != k) {
        return Err(QaError::invalid("ragged metric matrix"));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(QaError::NonFinite("metric matrix"));
    }
    let mut rank_sums = vec![0.0; k];
    let mut tie_term = 0.0;
    for row in rows {
        let (r, ties) = midranks(row);
        for (s, v) in rank_sums.iter_mut().zip(&r) {
            *s += v;
        }
        tie_term += ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>();
    }
    let (nf, kf) = (n as f64, k as f64);
    let correction = 1.0 - tie_term / (nf * (kf * kf * kf - kf));
    if correction <= 1e-12 {
        return Ok(FriedmanResult {
            statistic: 0.0,
            p_value: 1.0,
        });
    }
    let mean = nf * (kf + 1.0) / 2.0;
    let ss: f64 = rank_sums.iter().map(|r| (r - mean) * (r - mean)).sum();
    let statistic = (12.0 / (nf * kf * (kf + 1.0)) * ss / correction).max(0.0);
    let chi = ChiSquared::new(kf - 1.0).expect("k >= 2");
    Ok(FriedmanResult {
        statistic,
        p_value: chi.sf(statistic).clamp(0.0, 1.0),
    })
}
