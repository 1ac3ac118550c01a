//! Review budgets: the top-b% most uncertain voxels.
//!
//! For a budget of `n_b` voxels the threshold `tau_b` is the `n_b`-th largest
//! uncertainty. Voxels strictly above it are always flagged; the voxels equal
//! to it form the plateau, from which the remaining `m` voxels are drawn
//! uniformly without replacement, `PLATEAU_REPETITIONS` times. When the whole
//! plateau fits in the budget the selection is deterministic and evaluated
//! once.
//!
//! Plateau members are enumerated in voxel-index order and every draw comes
//! from a stream keyed by `(rng_seed, b)`, so the flagged sets do not depend
//! on evaluation order, thread count or on which other budgets are evaluated.
//!
//! Curves only need per-class counts of each draw. When a draw would touch
//! more than `EXPLICIT_DRAW_LIMIT` plateau voxels (large flat regions such as
//! saturated zero-entropy background) the counts are sampled directly from the
//! multivariate hypergeometric law, which is the distribution of the counts of
//! an explicit draw.

use std::collections::HashSet;

use rand::Rng;
use rand_distr::{Distribution, Hypergeometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::confusion::{Class, ConfusionSets};
use super::overlap::dice_from_counts;
use crate::error::{QaError, Result};
use crate::rng::{stream, StreamRng};
use crate::scalar::Scalar;
use crate::volgrid::{Voxel, VoxelGrid};

pub const PLATEAU_REPETITIONS: usize = 10;
/// Above this many drawn (or excluded) plateau voxels per repetition, curves
/// sample the per-class counts of the draw directly instead of the voxels.
pub const EXPLICIT_DRAW_LIMIT: usize = 1 << 16;
pub const DEFAULT_POINT_BUDGETS: [f64; 4] = [0.5, 1.0, 2.0, 5.0];

/// Flagged-voxel count for `b` percent of `n`, rounded half away from zero.
#[inline]
pub fn budget_count(b: f64, n: usize) -> usize {
    (b * n as f64 / 100.0).round() as usize
}

fn check_budget(b: f64) -> Result<()> {
    if !(0.0..=100.0).contains(&b) {
        return Err(QaError::OutOfRange {
            what: "budget percent",
            value: b,
            lo: 0.0,
            hi: 100.0,
        });
    }
    Ok(())
}

#[inline]
fn budget_stream(seed: u64, b: f64) -> StreamRng {
    stream(seed, b.to_bits())
}

/// Positions drawn from a plateau: either the chosen ones or, when more than
/// half is chosen, the excluded complement.
enum Draw {
    Chosen(Vec<usize>),
    Excluded(Vec<usize>),
}

/// Class counts of `m` voxels drawn without replacement from a plateau with
/// class totals `totals` (multivariate hypergeometric, one class at a time).
fn draw_class_counts(rng: &mut StreamRng, totals: [usize; 4], m: usize) -> [usize; 4] {
    let mut out = [0usize; 4];
    let mut pool: usize = totals.iter().sum();
    let mut left = m;
    for k in 0..3 {
        if left == 0 {
            break;
        }
        let h = Hypergeometric::new(pool as u64, totals[k] as u64, left as u64)
            .expect("sample fits in population");
        out[k] = h.sample(rng) as usize;
        pool -= totals[k];
        left -= out[k];
    }
    out[3] = left;
    out
}

fn draw_plateau(rng: &mut StreamRng, len: usize, m: usize) -> Draw {
    let complement = 2 * m > len;
    let want = if complement { len - m } else { m };
    let mut picked = Vec::with_capacity(want);
    if want.saturating_mul(64) < len {
        let mut taken = HashSet::with_capacity(want);
        while picked.len() < want {
            let r = rng.random_range(0..len);
            if taken.insert(r) {
                picked.push(r);
            }
        }
    } else {
        let mut taken = vec![0u64; len.div_ceil(64)];
        while picked.len() < want {
            let r = rng.random_range(0..len);
            let (w, bit) = (r / 64, 1u64 << (r % 64));
            if taken[w] & bit == 0 {
                taken[w] |= bit;
                picked.push(r);
            }
        }
    }
    if complement {
        Draw::Excluded(picked)
    } else {
        Draw::Chosen(picked)
    }
}

#[derive(Debug, Clone, Copy)]
enum PlateauRef {
    Head { start: usize, end: usize },
    Tail,
}

#[derive(Debug, Clone, Copy)]
struct Level<F> {
    threshold: F,
    strict: usize,
    plateau: PlateauRef,
    plateau_len: usize,
    deficit: usize,
}

/// Voxels of the domain ranked down to the `n_max`-th largest value.
struct Ranking<'a, F> {
    values: &'a [F],
    domain: Option<&'a [u8]>,
    /// domain voxels strictly above `tail_value`, sorted by (value desc, index asc)
    head: Vec<usize>,
    tail_value: Option<F>,
    tail_len: usize,
}

impl<'a, F: Scalar + Voxel> Ranking<'a, F> {
    fn new(values: &'a [F], domain: Option<&'a [u8]>, n_max: usize) -> Self {
        let in_domain = |i: usize| domain.is_none_or(|d| d[i] == 1);
        let n = match domain {
            Some(d) => d.iter().filter(|v| **v == 1).count(),
            None => values.len(),
        };
        debug_assert!(n_max <= n);
        if n_max == 0 {
            return Ranking {
                values,
                domain,
                head: Vec::new(),
                tail_value: None,
                tail_len: 0,
            };
        }
        let mut pool: Vec<F> = match domain {
            Some(d) => values
                .iter()
                .zip(d)
                .filter(|(_, m)| **m == 1)
                .map(|(v, _)| *v)
                .collect(),
            None => values.to_vec(),
        };
        let k = n - n_max;
        let (_, tau, _) = pool.select_nth_unstable_by(k, |a, b| a.partial_cmp(b).unwrap());
        let tau = *tau;
        drop(pool);
        let mut head: Vec<usize> = (0..values.len())
            .filter(|&i| in_domain(i) && values[i] > tau)
            .collect();
        head.par_sort_unstable_by(|&a, &b| {
            values[b]
                .partial_cmp(&values[a])
                .unwrap()
                .then(a.cmp(&b))
        });
        let tail_len = (0..values.len())
            .filter(|&i| in_domain(i) && values[i] == tau)
            .count();
        Ranking {
            values,
            domain,
            head,
            tail_value: Some(tau),
            tail_len,
        }
    }

    fn in_domain(&self, i: usize) -> bool {
        self.domain.is_none_or(|d| d[i] == 1)
    }

    /// Threshold and plateau for a budget of `nb >= 1` voxels.
    fn level(&self, nb: usize) -> Level<F> {
        let u = self.values;
        if nb <= self.head.len() {
            let tau = u[self.head[nb - 1]];
            let start = self.head.partition_point(|&i| u[i] > tau);
            let end = self.head.partition_point(|&i| u[i] >= tau);
            Level {
                threshold: tau,
                strict: start,
                plateau: PlateauRef::Head { start, end },
                plateau_len: end - start,
                deficit: nb - start,
            }
        } else {
            Level {
                threshold: self.tail_value.expect("budget within ranked range"),
                strict: self.head.len(),
                plateau: PlateauRef::Tail,
                plateau_len: self.tail_len,
                deficit: nb - self.head.len(),
            }
        }
    }

    /// Tail plateau voxels in index order.
    fn tail_indices(&self) -> Vec<usize> {
        match self.tail_value {
            Some(tau) => (0..self.values.len())
                .filter(|&i| self.in_domain(i) && self.values[i] == tau)
                .collect(),
            None => Vec::new(),
        }
    }
}

/// Flagged sets for one budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetSelection {
    pub budget_percent: f64,
    /// Voxels in every flagged set.
    pub n_flagged: usize,
    /// `tau_b`; `None` for an empty budget.
    pub threshold: Option<f64>,
    /// Voxels strictly above the threshold.
    pub strict_count: usize,
    /// Voxels equal to the threshold.
    pub plateau_count: usize,
    /// One set when deterministic, `PLATEAU_REPETITIONS` otherwise; each sorted.
    pub sets: Vec<Vec<usize>>,
}

impl BudgetSelection {
    pub fn is_deterministic(&self) -> bool {
        self.sets.len() == 1
    }
}

/// Top-`b`% most uncertain voxels of the whole grid.
pub fn select_budget<F: Scalar + Voxel>(
    unc: &VoxelGrid<F>,
    b: f64,
    rng_seed: u64,
) -> Result<BudgetSelection> {
    select_budget_in(unc, None, b, rng_seed)
}

/// Top-`b`% most uncertain voxels among those with `domain == 1`.
pub fn select_budget_in<F: Scalar + Voxel>(
    unc: &VoxelGrid<F>,
    domain: Option<&VoxelGrid<u8>>,
    b: f64,
    rng_seed: u64,
) -> Result<BudgetSelection> {
    check_budget(b)?;
    unc.expect_channels(1)?;
    unc.ensure_unit_range("uncertainty")?;
    if let Some(d) = domain {
        unc.same_geometry(d)?;
        d.ensure_binary()?;
    }
    let values = unc.data();
    let dom = domain.map(|d| d.data());
    let n = match dom {
        Some(d) => d.iter().filter(|v| **v == 1).count(),
        None => values.len(),
    };
    let nb = budget_count(b, n);
    let ranking = Ranking::new(values, dom, nb);
    if nb == 0 {
        return Ok(BudgetSelection {
            budget_percent: b,
            n_flagged: 0,
            threshold: None,
            strict_count: 0,
            plateau_count: 0,
            sets: vec![Vec::new()],
        });
    }
    let level = ranking.level(nb);
    let plateau: Vec<usize> = match level.plateau {
        PlateauRef::Head { start, end } => ranking.head[start..end].to_vec(),
        PlateauRef::Tail => ranking.tail_indices(),
    };
    let strict = &ranking.head[..level.strict];
    let sets = if level.deficit == level.plateau_len {
        let mut s: Vec<usize> = strict.iter().chain(&plateau).copied().collect();
        s.sort_unstable();
        vec![s]
    } else {
        let mut rng = budget_stream(rng_seed, b);
        (0..PLATEAU_REPETITIONS)
            .map(|_| {
                let mut s: Vec<usize> = strict.to_vec();
                match draw_plateau(&mut rng, level.plateau_len, level.deficit) {
                    Draw::Chosen(pos) => s.extend(pos.iter().map(|&p| plateau[p])),
                    Draw::Excluded(pos) => {
                        let mut skip = vec![false; plateau.len()];
                        for p in pos {
                            skip[p] = true;
                        }
                        s.extend(
                            plateau
                                .iter()
                                .zip(&skip)
                                .filter(|(_, k)| !**k)
                                .map(|(i, _)| *i),
                        );
                    }
                }
                s.sort_unstable();
                s
            })
            .collect()
    };
    Ok(BudgetSelection {
        budget_percent: b,
        n_flagged: nb,
        threshold: Some(level.threshold.f64()),
        strict_count: level.strict,
        plateau_count: level.plateau_len,
        sets,
    })
}

/// `tau_b` for the whole grid: the `n_b`-th largest uncertainty, `None` for an
/// empty budget. `{u >= tau_b}` is the strict set plus the whole plateau.
pub fn budget_threshold<F: Scalar + Voxel>(unc: &VoxelGrid<F>, b: f64) -> Result<Option<F>> {
    check_budget(b)?;
    unc.expect_channels(1)?;
    let nb = budget_count(b, unc.voxel_count());
    if nb == 0 {
        return Ok(None);
    }
    let mut pool = unc.data().to_vec();
    let k = pool.len() - nb;
    let (_, tau, _) = pool.select_nth_unstable_by(k, |a, b| a.partial_cmp(b).unwrap());
    Ok(Some(*tau))
}

/// Fraction of a class flagged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub value: f64,
    /// The class was empty; `value` is reported as 0.
    pub undefined: bool,
}

impl Coverage {
    fn from_counts(hit: usize, total: usize) -> Self {
        if total == 0 {
            Coverage {
                value: 0.0,
                undefined: true,
            }
        } else {
            Coverage {
                value: hit as f64 / total as f64,
                undefined: false,
            }
        }
    }
}

/// `|flagged ∩ cls| / |cls|` for sorted index lists.
pub fn coverage(flagged: &[usize], cls: &[usize]) -> Coverage {
    let (mut i, mut j, mut hit) = (0, 0, 0);
    while i < flagged.len() && j < cls.len() {
        match flagged[i].cmp(&cls[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                hit += 1;
                i += 1;
                j += 1;
            }
        }
    }
    Coverage::from_counts(hit, cls.len())
}

/// Budget sampling range in percent: `v1, v1 + step, ..., v2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetGrid {
    pub v1: f64,
    pub v2: f64,
    pub step: f64,
}

impl Default for BudgetGrid {
    fn default() -> Self {
        BudgetGrid {
            v1: 0.0,
            v2: 5.0,
            step: 0.1,
        }
    }
}

impl BudgetGrid {
    const MILLI: f64 = 1000.0;

    fn milli(v: f64, what: &str) -> Result<i64> {
        let m = (v * Self::MILLI).round();
        if !v.is_finite() || (v * Self::MILLI - m).abs() > 1e-6 {
            return Err(QaError::invalid(format!(
                "{what} {v} is not a multiple of 0.001%"
            )));
        }
        Ok(m as i64)
    }

    /// Grid points; each equals the nearest double to its decimal value.
    pub fn points(&self) -> Result<Vec<f64>> {
        let lo = Self::milli(self.v1, "v1")?;
        let hi = Self::milli(self.v2, "v2")?;
        let st = Self::milli(self.step, "step")?;
        if !(0 <= lo && lo < hi && hi <= 100_000) {
            return Err(QaError::invalid(format!(
                "budget range [{}, {}] must satisfy 0 <= v1 < v2 <= 100",
                self.v1, self.v2
            )));
        }
        if st <= 0 || (hi - lo) % st != 0 {
            return Err(QaError::invalid(format!(
                "step {} does not divide [{}, {}]",
                self.step, self.v1, self.v2
            )));
        }
        Ok((0..=(hi - lo) / st)
            .map(|i| (lo + i * st) as f64 / Self::MILLI)
            .collect())
    }

    /// Index of `b` on the grid.
    pub fn position(&self, b: f64) -> Option<usize> {
        self.points()
            .ok()?
            .iter()
            .position(|p| (p - b).abs() < 1e-9)
    }
}

/// Metric-vs-budget samples and their normalized AUCs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetCurve {
    pub budgets: Vec<f64>,
    pub ueo: Vec<f64>,
    pub cov_fp: Vec<f64>,
    pub cov_tp: Vec<f64>,
    pub cov_fn: Vec<f64>,
    pub cov_tn: Vec<f64>,
    pub auc_ueo: f64,
    pub auc_fp_minus_tp: f64,
    pub auc_fn_minus_tn: f64,
    /// Budget points averaged over plateau draws.
    pub plateau_sampled: Vec<bool>,
    /// Classes absent from the domain (coverage reported as 0).
    pub undefined_classes: Vec<Class>,
    /// |E| = |FP ∪ FN| in the domain.
    pub error_count: usize,
    pub domain_size: usize,
    pub s_repetitions: usize,
    pub rng_seed: u64,
}

struct PointValues {
    ueo: f64,
    cov: [f64; 4],
    sampled: bool,
}

/// Budget curve over the whole grid.
pub fn budget_curve<F: Scalar + Voxel>(
    unc: &VoxelGrid<F>,
    confusion: &ConfusionSets,
    grid: &BudgetGrid,
    rng_seed: u64,
) -> Result<BudgetCurve> {
    budget_curve_in(unc, confusion, None, grid, rng_seed)
}

/// Budget curve restricted to voxels with `domain == 1`.
pub fn budget_curve_in<F: Scalar + Voxel>(
    unc: &VoxelGrid<F>,
    confusion: &ConfusionSets,
    domain: Option<&VoxelGrid<u8>>,
    grid: &BudgetGrid,
    rng_seed: u64,
) -> Result<BudgetCurve> {
    let budgets = grid.points()?;
    unc.expect_channels(1)?;
    unc.ensure_unit_range("uncertainty")?;
    if confusion.len() != unc.voxel_count() {
        return Err(QaError::GridMismatch(format!(
            "{} uncertainty voxels vs {} labelled voxels",
            unc.voxel_count(),
            confusion.len()
        )));
    }
    if let Some(d) = domain {
        unc.same_geometry(d)?;
        d.ensure_binary()?;
    }
    let values = unc.data();
    let labels = confusion.labels();
    let dom = domain.map(|d| d.data());

    let mut totals = [0usize; 4];
    match dom {
        Some(d) => {
            for (l, m) in labels.iter().zip(d) {
                if *m == 1 {
                    totals[*l as usize] += 1;
                }
            }
        }
        None => totals = confusion.counts(),
    }
    let n: usize = totals.iter().sum();
    let errors = totals[Class::Fp as usize] + totals[Class::Fn as usize];
    let n_max = budget_count(*budgets.last().unwrap(), n);
    let ranking = Ranking::new(values, dom, n_max);

    let mut prefix: Vec<[u32; 4]> = Vec::with_capacity(ranking.head.len() + 1);
    let mut acc = [0u32; 4];
    prefix.push(acc);
    for &i in &ranking.head {
        acc[labels[i] as usize] += 1;
        prefix.push(acc);
    }
    let tail_labels: Vec<u8> = if n_max > ranking.head.len() {
        ranking.tail_indices().iter().map(|&i| labels[i]).collect()
    } else {
        Vec::new()
    };
    let mut tail_totals = [0usize; 4];
    for l in &tail_labels {
        tail_totals[*l as usize] += 1;
    }

    let ranking = &ranking;
    let (tail_labels, prefix) = (&tail_labels, &prefix);
    let point = |b: f64| -> PointValues {
        let nb = budget_count(b, n);
        let score = |c: [usize; 4]| -> (f64, [f64; 4]) {
            let hit_e = c[Class::Fp as usize] + c[Class::Fn as usize];
            let ueo = dice_from_counts(nb, errors, hit_e);
            let cov = [0, 1, 2, 3].map(|k| Coverage::from_counts(c[k], totals[k]).value);
            (ueo, cov)
        };
        if nb == 0 {
            let (ueo, cov) = score([0; 4]);
            return PointValues {
                ueo,
                cov,
                sampled: false,
            };
        }
        let level = ranking.level(nb);
        let widen = |p: [u32; 4]| p.map(|v| v as usize);
        let base = widen(prefix[level.strict]);
        let (plateau_totals, class_at): ([usize; 4], Box<dyn Fn(usize) -> usize + '_>) =
            match level.plateau {
                PlateauRef::Head { start, end } => {
                    let hi = widen(prefix[end]);
                    let lo = widen(prefix[start]);
                    (
                        [0, 1, 2, 3].map(|k| hi[k] - lo[k]),
                        Box::new(move |p| labels[ranking.head[start + p]] as usize),
                    )
                }
                PlateauRef::Tail => (tail_totals, Box::new(|p| tail_labels[p] as usize)),
            };
        if level.deficit == level.plateau_len {
            let (ueo, cov) = score([0, 1, 2, 3].map(|k| base[k] + plateau_totals[k]));
            return PointValues {
                ueo,
                cov,
                sampled: false,
            };
        }
        let mut rng = budget_stream(rng_seed, b);
        let mut ueo_sum = 0.0;
        let mut cov_sum = [0.0; 4];
        let explicit = level.deficit.min(level.plateau_len - level.deficit) <= EXPLICIT_DRAW_LIMIT;
        for _ in 0..PLATEAU_REPETITIONS {
            let mut c = base;
            if !explicit {
                let drawn = draw_class_counts(&mut rng, plateau_totals, level.deficit);
                for k in 0..4 {
                    c[k] += drawn[k];
                }
                let (u, cov) = score(c);
                ueo_sum += u;
                for k in 0..4 {
                    cov_sum[k] += cov[k];
                }
                continue;
            }
            match draw_plateau(&mut rng, level.plateau_len, level.deficit) {
                Draw::Chosen(pos) => {
                    for p in pos {
                        c[class_at(p)] += 1;
                    }
                }
                Draw::Excluded(pos) => {
                    let mut ex = [0usize; 4];
                    for p in pos {
                        ex[class_at(p)] += 1;
                    }
                    for k in 0..4 {
                        c[k] += plateau_totals[k] - ex[k];
                    }
                }
            }
            let (u, cov) = score(c);
            ueo_sum += u;
            for k in 0..4 {
                cov_sum[k] += cov[k];
            }
        }
        let s = PLATEAU_REPETITIONS as f64;
        PointValues {
            ueo: ueo_sum / s,
            cov: cov_sum.map(|v| v / s),
            sampled: true,
        }
    };

    let samples: Vec<PointValues> = budgets.par_iter().map(|&b| point(b)).collect();
    let col = |f: &dyn Fn(&PointValues) -> f64| samples.iter().map(f).collect::<Vec<f64>>();
    let ueo = col(&|p| p.ueo);
    let cov_tp = col(&|p| p.cov[Class::Tp as usize]);
    let cov_fp = col(&|p| p.cov[Class::Fp as usize]);
    let cov_fn = col(&|p| p.cov[Class::Fn as usize]);
    let cov_tn = col(&|p| p.cov[Class::Tn as usize]);
    let fp_tp: Vec<f64> = cov_fp.iter().zip(&cov_tp).map(|(a, b)| a - b).collect();
    let fn_tn: Vec<f64> = cov_fn.iter().zip(&cov_tn).map(|(a, b)| a - b).collect();
    Ok(BudgetCurve {
        auc_ueo: normalized_trapezoid(&budgets, &ueo)?,
        auc_fp_minus_tp: normalized_trapezoid(&budgets, &fp_tp)?,
        auc_fn_minus_tn: normalized_trapezoid(&budgets, &fn_tn)?,
        plateau_sampled: samples.iter().map(|p| p.sampled).collect(),
        undefined_classes: Class::ALL
            .into_iter()
            .filter(|c| totals[*c as usize] == 0)
            .collect(),
        budgets,
        ueo,
        cov_fp,
        cov_tp,
        cov_fn,
        cov_tn,
        error_count: errors,
        domain_size: n,
        s_repetitions: PLATEAU_REPETITIONS,
        rng_seed,
    })
}

/// Trapezoidal integral of `values` over `budgets`, divided by the range length.
pub fn normalized_trapezoid(budgets: &[f64], values: &[f64]) -> Result<f64> {
    if budgets.len() != values.len() || budgets.len() < 2 {
        return Err(QaError::invalid("trapezoid needs at least two matching samples"));
    }
    let span = budgets[budgets.len() - 1] - budgets[0];
    if !(span > 0.0) {
        return Err(QaError::invalid("budgets must be increasing"));
    }
    let area: f64 = budgets
        .windows(2)
        .zip(values.windows(2))
        .map(|(b, v)| (b[1] - b[0]) * (v[0] + v[1]) / 2.0)
        .sum();
    Ok(area / span)
}

/// UEO and coverage read off a curve at fixed budgets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointwiseRow {
    pub budget: f64,
    pub ueo: f64,
    pub cov_fp: f64,
    pub cov_fn: f64,
}

pub fn pointwise_report(curve: &BudgetCurve, at: &[f64]) -> Result<Vec<PointwiseRow>> {
    at.iter()
        .map(|&b| {
            let k = curve
                .budgets
                .iter()
                .position(|p| (p - b).abs() < 1e-9)
                .ok_or_else(|| QaError::invalid(format!("budget {b}% is not on the curve grid")))?;
            Ok(PointwiseRow {
                budget: curve.budgets[k],
                ueo: curve.ueo[k],
                cov_fp: curve.cov_fp[k],
                cov_fn: curve.cov_fn[k],
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::confusion;
    use crate::volgrid::{Dims, Spacing};

    fn line<T: Voxel>(v: Vec<T>) -> VoxelGrid<T> {
        VoxelGrid::scalar(Dims::new(1, 1, v.len()), Spacing::isotropic(1.0).unwrap(), v).unwrap()
    }

    #[test]
    fn rounding_half_away() {
        assert_eq!(budget_count(0.5, 100), 1);
        assert_eq!(budget_count(0.3, 1000), 3);
        assert_eq!(budget_count(0.25, 200), 1);
        assert_eq!(budget_count(1.0, 1000), 10);
    }

    #[test]
    fn zero_budget_is_empty() {
        let u = line(vec![0.3f32; 10]);
        let s = select_budget(&u, 0.0, 1).unwrap();
        assert_eq!(s.sets, vec![Vec::<usize>::new()]);
        assert!(select_budget(&u, 101.0, 1).is_err());
        assert!(select_budget(&u, -0.1, 1).is_err());
    }

    #[test]
    fn distinct_values_top_ten() {
        let n = 1000;
        let u = line((0..n).map(|i| ((i * 7919) % n) as f64 / n as f64).collect());
        let s = select_budget(&u, 1.0, 5).unwrap();
        assert!(s.is_deterministic());
        let mut want: Vec<usize> = (0..n).collect();
        want.sort_by(|&a, &b| u.data()[b].partial_cmp(&u.data()[a]).unwrap());
        let mut want = want[..10].to_vec();
        want.sort_unstable();
        assert_eq!(s.sets[0], want);
    }

    #[test]
    fn plateau_sets_are_reproducible() {
        let u = line(vec![0.5f32; 1000]);
        let a = select_budget(&u, 1.0, 9).unwrap();
        let b = select_budget(&u, 1.0, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.sets.len(), PLATEAU_REPETITIONS);
        for s in &a.sets {
            assert_eq!(s.len(), 10);
        }
        assert_ne!(a.sets[0], a.sets[1]);
        let c = select_budget(&u, 1.0, 10).unwrap();
        assert_ne!(a.sets, c.sets);
    }

    #[test]
    fn complement_draws_have_right_size() {
        // deficit > half the plateau exercises the excluded-complement path
        let mut v = vec![0.2f32; 100];
        v[0] = 0.9;
        let u = line(v);
        let s = select_budget(&u, 80.0, 3).unwrap();
        assert_eq!(s.plateau_count, 99);
        for set in &s.sets {
            assert_eq!(set.len(), 80);
            assert!(set.contains(&0));
        }
    }

    #[test]
    fn threshold_matches_selection() {
        let u = line((0..200).map(|i| ((i * 37) % 50) as f32 / 50.0).collect());
        for b in [0.0, 0.5, 3.0, 10.0, 100.0] {
            let s = select_budget(&u, b, 0).unwrap();
            let t = budget_threshold(&u, b).unwrap().map(f64::from);
            assert_eq!(t, s.threshold);
        }
    }

    #[test]
    fn coverage_reference() {
        assert_eq!(coverage(&[1, 2, 3], &[1, 2]).value, 1.0);
        assert_eq!(coverage(&[5], &[1, 2]).value, 0.0);
        let cls: Vec<usize> = (0..40).collect();
        let flagged: Vec<usize> = (30..50).collect();
        assert_eq!(coverage(&flagged, &cls).value, 0.25);
        let c = coverage(&flagged, &[]);
        assert!(c.undefined);
        assert_eq!(c.value, 0.0);
    }

    #[test]
    fn grid_points() {
        let g = BudgetGrid::default();
        let p = g.points().unwrap();
        assert_eq!(p.len(), 51);
        assert_eq!(p[3], 0.3);
        assert_eq!(p[50], 5.0);
        assert!(BudgetGrid { v1: 0.0, v2: 5.0, step: 0.3 }.points().is_err());
        assert!(BudgetGrid { v1: 5.0, v2: 5.0, step: 0.1 }.points().is_err());
        assert_eq!(g.position(0.5), Some(5));
        assert_eq!(g.position(0.75), None);
    }

    #[test]
    fn trapezoid_reference() {
        let b = BudgetGrid::default().points().unwrap();
        let c = vec![0.37; b.len()];
        assert!((normalized_trapezoid(&b, &c).unwrap() - 0.37).abs() < 1e-12);
        let lin: Vec<f64> = b.iter().map(|x| x / 5.0).collect();
        assert!((normalized_trapezoid(&b, &lin).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pointwise_off_grid() {
        let pred = line(vec![1u8, 0, 0, 0]);
        let gt = line(vec![0u8, 0, 0, 0]);
        let conf = confusion(&pred, &gt).unwrap();
        let u = line(vec![0.9f32, 0.1, 0.2, 0.3]);
        let curve = budget_curve(&u, &conf, &BudgetGrid::default(), 0).unwrap();
        let rows = pointwise_report(&curve, &[0.0, 0.5]).unwrap();
        assert_eq!(rows[0].ueo, 0.0);
        assert_eq!(rows[0].cov_fp, 0.0);
        assert!(pointwise_report(&curve, &[0.75]).is_err());
    }
}
