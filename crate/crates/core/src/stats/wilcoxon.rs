use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::midranks;
use crate::error::{QaError, Result};

/// Largest number of nonzero differences for which `Auto` enumerates exactly.
pub const EXACT_MAX_N: usize = 25;
pub const MIN_NONZERO_PAIRS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PMethod {
    Auto,
    Exact,
    Normal,
    /// Fewer than `MIN_NONZERO_PAIRS` nonzero differences; p is reported as 1.
    InsufficientPairs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// min(W+, W−)
    pub statistic: f64,
    pub p_value: f64,
    pub n_nonzero: usize,
    pub method: PMethod,
}

impl WilcoxonResult {
    pub fn is_insufficient(&self) -> bool {
        self.method == PMethod::InsufficientPairs
    }
}

/// Two-sided Wilcoxon signed-rank test on paired samples.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    wilcoxon_signed_rank_with(a, b, PMethod::Auto)
}

/// As [`wilcoxon_signed_rank`] with the p-value method forced.
pub fn wilcoxon_signed_rank_with(a: &[f64], b: &[f64], method: PMethod) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(QaError::invalid(format!(
            "paired samples differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(QaError::NonFinite("paired sample"));
    }
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    let n = diffs.len();
    if n < MIN_NONZERO_PAIRS || method == PMethod::InsufficientPairs {
        return Ok(WilcoxonResult {
            statistic: 0.0,
            p_value: 1.0,
            n_nonzero: n,
            method: PMethod::InsufficientPairs,
        });
    }
    let mags: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let (ranks, ties) = midranks(&mags);
    let w_plus: f64 = ranks.iter().zip(&diffs).filter(|(_, d)| **d > 0.0).map(|(r, _)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let statistic = w_plus.min(total - w_plus);
    let method = match method {
        PMethod::Auto if n <= EXACT_MAX_N => PMethod::Exact,
        PMethod::Auto => PMethod::Normal,
        m => m,
    };
    let p_value = match method {
        PMethod::Exact => exact_p(&ranks, statistic),
        _ => normal_p(n, &ties, statistic),
    };
    Ok(WilcoxonResult {
        statistic,
        p_value,
        n_nonzero: n,
        method,
    })
}

/// `min(1, 2 P(W+ <= stat))` under the sign-flip null, by counting subsets of
/// the (doubled, hence integral) ranks.
fn exact_p(ranks: &[f64], stat: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let max: usize = doubled.iter().sum();
    let mut ways = vec![0.0f64; max + 1];
    ways[0] = 1.0;
    let mut reach = 0;
    for &r in &doubled {
        for s in (0..=reach).rev() {
            if ways[s] != 0.0 {
                ways[s + r] += ways[s];
            }
        }
        reach += r;
    }
    let limit = (2.0 * stat).round() as usize;
    let below: f64 = ways[..=limit].iter().sum();
    let all = 2f64.powi(ranks.len() as i32);
    (2.0 * below / all).min(1.0)
}

/// Tie-corrected normal approximation with continuity correction.
fn normal_p(n: usize, ties: &[usize], stat: f64) -> f64 {
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let tie: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum();
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((stat - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::standard();
    (2.0 * normal.sf(z)).min(1.0)
}
