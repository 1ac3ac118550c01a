use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{bh_fdr, friedman, wilcoxon_signed_rank, PMethod};
use crate::error::{QaError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    HigherBetter,
    LowerBetter,
}

/// Patients × methods table for one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricMatrix {
    pub metric: String,
    pub patients: Vec<String>,
    pub methods: Vec<String>,
    /// `values[patient][method]`
    pub values: Vec<Vec<f64>>,
    pub direction: Direction,
}

impl MetricMatrix {
    pub fn new(
        metric: impl Into<String>,
        patients: Vec<String>,
        methods: Vec<String>,
        values: Vec<Vec<f64>>,
        direction: Direction,
    ) -> Result<Self> {
        let m = MetricMatrix {
            metric: metric.into(),
            patients,
            methods,
            values,
            direction,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, k) = (self.patients.len(), self.methods.len());
        if n < 2 || k < 2 {
            return Err(QaError::invalid(format!(
                "metric matrix needs at least 2 patients and 2 methods, got {n}x{k}"
            )));
        }
        if self.values.len() != n || self.values.iter().any(|r| r.len() != k) {
            return Err(QaError::invalid("metric matrix shape does not match its labels"));
        }
        if self.values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(QaError::NonFinite("metric matrix"));
        }
        Ok(())
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.iter().map(|r| r[j]).collect()
    }

    pub fn means(&self) -> Vec<f64> {
        let n = self.values.len() as f64;
        (0..self.methods.len())
            .map(|j| self.values.iter().map(|r| r[j]).sum::<f64>() / n)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub method_a: String,
    pub method_b: String,
    pub wilcoxon_stat: f64,
    pub raw_p: f64,
    pub adjusted_p: f64,
    pub n_nonzero: usize,
    pub p_method: PMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub metric: String,
    pub direction: Direction,
    pub methods: Vec<String>,
    pub means: Vec<f64>,
    pub friedman_stat: f64,
    pub friedman_p: f64,
    pub pairwise: Vec<PairwiseTest>,
    pub best_method: String,
    /// Aligned with `methods`.
    pub star_flags: Vec<bool>,
    pub alpha: f64,
}

impl ComparisonResult {
    pub fn is_starred(&self, method: &str) -> bool {
        self.methods
            .iter()
            .position(|m| m == method)
            .is_some_and(|i| self.star_flags[i])
    }

    /// Pairs that could not be tested (too few nonzero differences).
    pub fn insufficient_pairs(&self) -> impl Iterator<Item = &PairwiseTest> {
        self.pairwise
            .iter()
            .filter(|p| p.p_method == PMethod::InsufficientPairs)
    }
}

/// Friedman omnibus, all pairwise Wilcoxon tests with BH over the whole family,
/// and a star on every method whose adjusted p against the best is below `alpha`.
pub fn compare_methods(matrix: &MetricMatrix, alpha: f64) -> Result<ComparisonResult> {
    matrix.validate()?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(QaError::OutOfRange {
            what: "alpha",
            value: alpha,
            lo: 0.0,
            hi: 1.0,
        });
    }
    let fr = friedman(&matrix.values)?;
    let k = matrix.methods.len();
    let pairs: Vec<(usize, usize)> = (0..k)
        .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
        .collect();
    let tests = pairs
        .par_iter()
        .map(|&(i, j)| wilcoxon_signed_rank(&matrix.column(i), &matrix.column(j)))
        .collect::<Result<Vec<_>>>()?;
    let raw: Vec<f64> = tests.iter().map(|t| t.p_value).collect();
    let adjusted = bh_fdr(&raw)?;

    let means = matrix.means();
    let mut best = 0;
    for j in 1..k {
        let better = match matrix.direction {
            Direction::HigherBetter => means[j] > means[best],
            Direction::LowerBetter => means[j] < means[best],
        };
        if better {
            best = j;
        }
    }
    let mut star_flags = vec![false; k];
    for (p, &(i, j)) in pairs.iter().enumerate() {
        let other = if i == best {
            j
        } else if j == best {
            i
        } else {
            continue;
        };
        star_flags[other] = adjusted[p] < alpha;
    }
    let pairwise = pairs
        .iter()
        .zip(tests.iter().zip(&adjusted))
        .map(|(&(i, j), (t, &adj))| PairwiseTest {
            method_a: matrix.methods[i].clone(),
            method_b: matrix.methods[j].clone(),
            wilcoxon_stat: t.statistic,
            raw_p: t.p_value,
            adjusted_p: adj,
            n_nonzero: t.n_nonzero,
            p_method: t.method,
        })
        .collect();
    Ok(ComparisonResult {
        metric: matrix.metric.clone(),
        direction: matrix.direction,
        methods: matrix.methods.clone(),
        means,
        friedman_stat: fr.statistic,
        friedman_p: fr.p_value,
        pairwise,
        best_method: matrix.methods[best].clone(),
        star_flags,
        alpha,
    })
}
