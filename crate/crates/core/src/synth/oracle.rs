//! Brute-force reference implementations, one voxel at a time.
//!
//! Deliberately naive (the distance transform is quadratic), so inputs are
//! capped at `MAX_ORACLE_VOXELS`. Used to cross-check the fast paths.

use std::collections::HashSet;

use rand::Rng;

use crate::error::{QaError, Result};
use crate::metrics::{BudgetGrid, SuiteConfig, PLATEAU_REPETITIONS};
use crate::rng::stream;
use crate::volgrid::{Dims, Spacing, VoxelGrid};

pub const MAX_ORACLE_VOXELS: usize = 32 * 32 * 32;

fn cap(d: Dims) -> Result<()> {
    if d.len() > MAX_ORACLE_VOXELS {
        return Err(QaError::invalid(format!(
            "oracle input has {} voxels, cap is {MAX_ORACLE_VOXELS}",
            d.len()
        )));
    }
    Ok(())
}

fn mm(d: Dims, s: Spacing, i: usize) -> [f64; 3] {
    let (z, y, x) = d.coords(i);
    [z as f64 * s.z, y as f64 * s.y, x as f64 * s.x]
}

/// Distance (mm) from every voxel to the nearest seed; infinite without seeds.
pub fn edt(seeds: &[u8], d: Dims, s: Spacing) -> Result<Vec<f64>> {
    cap(d)?;
    let sites: Vec<[f64; 3]> = (0..d.len()).filter(|&i| seeds[i] == 1).map(|i| mm(d, s, i)).collect();
    Ok((0..d.len())
        .map(|i| {
            let p = mm(d, s, i);
            sites
                .iter()
                .map(|q| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min)
        })
        .collect())
}

/// Foreground voxels with a background or out-of-volume face neighbour.
pub fn boundary(mask: &[u8], d: Dims) -> Vec<u8> {
    let n = [d.nz as i64, d.ny as i64, d.nx as i64];
    (0..d.len())
        .map(|i| {
            if mask[i] == 0 {
                return 0;
            }
            let (z, y, x) = d.coords(i);
            let c = [z as i64, y as i64, x as i64];
            for axis in 0..3 {
                for step in [-1i64, 1] {
                    let mut nb = c;
                    nb[axis] += step;
                    if nb[axis] < 0 || nb[axis] >= n[axis] {
                        return 1;
                    }
                    if mask[d.index(nb[0] as usize, nb[1] as usize, nb[2] as usize)] == 0 {
                        return 1;
                    }
                }
            }
            0
        })
        .collect()
}

pub fn roi(pred: &[u8], gt: &[u8], d: Dims, s: Spacing, delta_mm: f64) -> Result<Vec<u8>> {
    let a = boundary(pred, d);
    let b = boundary(gt, d);
    let seeds: Vec<u8> = a.iter().zip(&b).map(|(x, y)| x | y).collect();
    Ok(edt(&seeds, d, s)?.iter().map(|v| u8::from(*v <= delta_mm)).collect())
}

pub fn ece(prob: &[f64], gt: &[u8], roi: &[u8], bins: usize) -> f64 {
    let mut conf_sum = vec![0.0; bins];
    let mut correct = vec![0usize; bins];
    let mut count = vec![0usize; bins];
    let mut total = 0usize;
    for i in 0..prob.len() {
        if roi[i] == 0 {
            continue;
        }
        let conf = prob[i].max(1.0 - prob[i]);
        let mut bin = 0;
        for m in 0..bins {
            let lo = m as f64 / bins as f64;
            let hi = (m + 1) as f64 / bins as f64;
            if conf > lo && conf <= hi {
                bin = m;
                break;
            }
        }
        let label = u8::from(prob[i] >= 0.5);
        conf_sum[bin] += conf;
        correct[bin] += usize::from(label == gt[i]);
        count[bin] += 1;
        total += 1;
    }
    let mut e = 0.0;
    for m in 0..bins {
        if count[m] > 0 {
            let acc = correct[m] as f64 / count[m] as f64;
            let conf = conf_sum[m] / count[m] as f64;
            e += count[m] as f64 / total as f64 * (acc - conf).abs();
        }
    }
    e
}

pub fn brier(prob: &[f64], gt: &[u8], roi: &[u8]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0.0;
    for i in 0..prob.len() {
        if roi[i] == 1 {
            sum += (prob[i] - gt[i] as f64).powi(2);
            n += 1.0;
        }
    }
    sum / n
}

fn dice(a: &[bool], b: &[bool]) -> f64 {
    let na = a.iter().filter(|v| **v).count();
    let nb = b.iter().filter(|v| **v).count();
    let both = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    if na + nb == 0 {
        1.0
    } else {
        2.0 * both as f64 / (na + nb) as f64
    }
}

pub fn dsc(pred: &[u8], gt: &[u8]) -> f64 {
    let a: Vec<bool> = pred.iter().map(|v| *v == 1).collect();
    let b: Vec<bool> = gt.iter().map(|v| *v == 1).collect();
    dice(&a, &b)
}

/// Class code per voxel: 0 TP, 1 FP, 2 FN, 3 TN.
pub fn classes(pred: &[u8], gt: &[u8]) -> Vec<u8> {
    pred.iter()
        .zip(gt)
        .map(|(p, g)| match (p, g) {
            (1, 1) => 0,
            (1, 0) => 1,
            (0, 1) => 2,
            _ => 3,
        })
        .collect()
}

pub fn ueo_at_threshold(unc: &[f64], classes: &[u8], tau: f64) -> f64 {
    let u: Vec<bool> = unc.iter().map(|v| *v > tau).collect();
    let e: Vec<bool> = classes.iter().map(|c| *c == 1 || *c == 2).collect();
    dice(&u, &e)
}

/// Fraction of `cls` inside `flagged`; `None` for an empty class.
pub fn coverage(flagged: &[usize], cls: &[usize]) -> Option<f64> {
    if cls.is_empty() {
        return None;
    }
    let f: HashSet<usize> = flagged.iter().copied().collect();
    Some(cls.iter().filter(|i| f.contains(i)).count() as f64 / cls.len() as f64)
}

/// Flagged sets for budget `b`: full sort, then the documented plateau
/// protocol (draws from the `(seed, b)` stream over the plateau in index
/// order, complement drawn when more than half is needed).
pub fn select(unc: &[f64], b: f64, seed: u64) -> Vec<Vec<usize>> {
    let n = unc.len();
    let nb = (b * n as f64 / 100.0).round() as usize;
    if nb == 0 {
        return vec![Vec::new()];
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| unc[y].partial_cmp(&unc[x]).unwrap().then(x.cmp(&y)));
    let tau = unc[order[nb - 1]];
    let strict: Vec<usize> = (0..n).filter(|&i| unc[i] > tau).collect();
    let plateau: Vec<usize> = (0..n).filter(|&i| unc[i] == tau).collect();
    let m = nb - strict.len();
    if m == plateau.len() {
        let mut s: Vec<usize> = strict.iter().chain(&plateau).copied().collect();
        s.sort();
        return vec![s];
    }
    let mut rng = stream(seed, b.to_bits());
    let complement = 2 * m > plateau.len();
    let want = if complement { plateau.len() - m } else { m };
    (0..PLATEAU_REPETITIONS)
        .map(|_| {
            let mut picked = HashSet::new();
            while picked.len() < want {
                picked.insert(rng.random_range(0..plateau.len()));
            }
            let mut s = strict.clone();
            for (k, i) in plateau.iter().enumerate() {
                if picked.contains(&k) != complement {
                    s.push(*i);
                }
            }
            s.sort();
            s
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleCurve {
    pub budgets: Vec<f64>,
    pub ueo: Vec<f64>,
    /// Indexed by class code.
    pub coverage: [Vec<f64>; 4],
    pub auc_ueo: f64,
    pub auc_fp_minus_tp: f64,
    pub auc_fn_minus_tn: f64,
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    let mut a = 0.0;
    for i in 1..x.len() {
        a += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
    }
    a / (x[x.len() - 1] - x[0])
}

pub fn budget_curve(unc: &[f64], classes: &[u8], grid: &BudgetGrid, seed: u64) -> Result<OracleCurve> {
    let budgets = grid.points()?;
    let members: Vec<Vec<usize>> = (0..4u8)
        .map(|c| (0..classes.len()).filter(|&i| classes[i] == c).collect())
        .collect();
    let errors: Vec<bool> = classes.iter().map(|c| *c == 1 || *c == 2).collect();
    let mut ueo = Vec::new();
    let mut cov: [Vec<f64>; 4] = Default::default();
    for &b in &budgets {
        let sets = select(unc, b, seed);
        let s = sets.len() as f64;
        let mut u_sum = 0.0;
        let mut c_sum = [0.0; 4];
        for set in &sets {
            let mut flagged = vec![false; unc.len()];
            for &i in set {
                flagged[i] = true;
            }
            u_sum += dice(&flagged, &errors);
            for c in 0..4 {
                c_sum[c] += coverage(set, &members[c]).unwrap_or(0.0);
            }
        }
        ueo.push(u_sum / s);
        for c in 0..4 {
            cov[c].push(c_sum[c] / s);
        }
    }
    let diff = |a: &Vec<f64>, b: &Vec<f64>| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>();
    Ok(OracleCurve {
        auc_ueo: trapezoid(&budgets, &ueo),
        auc_fp_minus_tp: trapezoid(&budgets, &diff(&cov[1], &cov[0])),
        auc_fn_minus_tn: trapezoid(&budgets, &diff(&cov[2], &cov[3])),
        budgets,
        ueo,
        coverage: cov,
    })
}

pub fn binary_entropy(p: f64) -> f64 {
    let h = -p * (p + 1e-10).log2() - (1.0 - p) * (1.0 - p + 1e-10).log2();
    h.clamp(0.0, 1.0)
}

/// Reference metric row of one aggregated probability map.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub dsc: f64,
    /// `None` when both masks are empty.
    pub ece: Option<f64>,
    pub bs: Option<f64>,
    pub roi: Vec<u8>,
    pub prediction: Vec<u8>,
    pub curve: OracleCurve,
}

/// Metrics of a probability map `prob` with uncertainty map `unc`.
pub fn oracle_metrics(
    prob: &VoxelGrid<f32>,
    unc: &VoxelGrid<f32>,
    gt: &VoxelGrid<u8>,
    cfg: &SuiteConfig,
    seed: u64,
) -> Result<OracleRow> {
    let d = prob.dims();
    cap(d)?;
    let p: Vec<f64> = prob.data().iter().map(|v| *v as f64).collect();
    let g = gt.data();
    let prediction: Vec<u8> = prob.data().iter().map(|v| u8::from(*v >= 0.5)).collect();
    let roi = roi(&prediction, g, d, prob.spacing(), cfg.roi_delta_mm)?;
    let any_roi = roi.iter().any(|v| *v == 1);
    let u: Vec<f64> = unc.data().iter().map(|v| *v as f64).collect();
    let cls = classes(&prediction, g);
    Ok(OracleRow {
        dsc: dsc(&prediction, g),
        ece: any_roi.then(|| ece(&p, g, &roi, cfg.ece_bins)),
        bs: any_roi.then(|| brier(&p, g, &roi)),
        curve: budget_curve(&u, &cls, &cfg.budgets, seed)?,
        roi,
        prediction,
    })
}
