//! Calibration scores restricted to a region of interest.
//!
//! Sums run sequentially in voxel order so results do not depend on the
//! thread count.

use serde::{Deserialize, Serialize};

use crate::error::{QaError, Result};
use crate::roi::RoiMask;
use crate::scalar::Scalar;
use crate::uq::{aggregate_mean, PredictionSet, TemperatureConfig};
use crate::volgrid::{Voxel, VoxelGrid};

pub const DEFAULT_ECE_BINS: usize = 20;

/// Accumulators of one confidence bin, restricted to the ROI.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    pub bin_index: usize,
    pub confidence_sum: f64,
    pub correct_count: usize,
    pub total_count: usize,
}

impl BinStats {
    pub fn accuracy(&self) -> Option<f64> {
        (self.total_count > 0).then(|| self.correct_count as f64 / self.total_count as f64)
    }

    pub fn confidence(&self) -> Option<f64> {
        (self.total_count > 0).then(|| self.confidence_sum / self.total_count as f64)
    }
}

/// Index `m` of the right-closed bin `(m/M, (m+1)/M]` holding `conf`
/// (bin 0 also takes `conf == 0`).
#[inline]
pub fn confidence_bin(conf: f64, bins: usize) -> usize {
    let mf = bins as f64;
    let edge = |m: usize| m as f64 / mf;
    let mut m = ((conf * mf).ceil() as isize - 1).clamp(0, bins as isize - 1) as usize;
    while m > 0 && conf <= edge(m) {
        m -= 1;
    }
    while m + 1 < bins && conf > edge(m + 1) {
        m += 1;
    }
    m
}

fn check_inputs<F: Scalar + Voxel>(
    prob: &VoxelGrid<F>,
    gt: &VoxelGrid<u8>,
    roi: &RoiMask,
) -> Result<()> {
    prob.expect_channels(1)?;
    prob.same_geometry(gt)?;
    prob.same_geometry(&roi.mask)?;
    prob.ensure_unit_range("probability")?;
    gt.ensure_binary()?;
    if roi.voxel_count == 0 {
        return Err(QaError::EmptyRoi);
    }
    Ok(())
}

/// Per-bin confidence/accuracy statistics over the ROI. Confidence is the
/// predicted-class probability `max(p, 1-p)`; the predicted class is `p >= 0.5`.
pub fn reliability_bins<F: Scalar + Voxel>(
    prob: &VoxelGrid<F>,
    gt: &VoxelGrid<u8>,
    roi: &RoiMask,
    bins: usize,
) -> Result<Vec<BinStats>> {
    if bins == 0 {
        return Err(QaError::invalid("ECE needs at least one bin"));
    }
    check_inputs(prob, gt, roi)?;
    let mut stats: Vec<BinStats> = (0..bins)
        .map(|m| BinStats {
            bin_index: m,
            ..Default::default()
        })
        .collect();
    let half = F::of(0.5);
    for ((p, y), r) in prob.data().iter().zip(gt.data()).zip(roi.mask.data()) {
        if *r == 0 {
            continue;
        }
        let pf = p.f64();
        let conf = pf.max(1.0 - pf);
        let predicted = u8::from(*p >= half);
        let s = &mut stats[confidence_bin(conf, bins)];
        s.confidence_sum += conf;
        s.correct_count += usize::from(predicted == *y);
        s.total_count += 1;
    }
    Ok(stats)
}

/// Expected calibration error over the ROI; empty bins are skipped.
pub fn ece<F: Scalar + Voxel>(
    prob: &VoxelGrid<F>,
    gt: &VoxelGrid<u8>,
    roi: &RoiMask,
    bins: usize,
) -> Result<f64> {
    let stats = reliability_bins(prob, gt, roi, bins)?;
    let total: usize = stats.iter().map(|s| s.total_count).sum();
    let mut acc = 0.0;
    for s in stats.iter().filter(|s| s.total_count > 0) {
        // |B|/|R| * |acc - conf| == |correct - conf_sum| / |R|
        acc += (s.correct_count as f64 - s.confidence_sum).abs();
    }
    Ok(acc / total as f64)
}

/// Brier score of the foreground probability over the ROI.
pub fn brier<F: Scalar + Voxel>(prob: &VoxelGrid<F>, gt: &VoxelGrid<u8>, roi: &RoiMask) -> Result<f64> {
    check_inputs(prob, gt, roi)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for ((p, y), r) in prob.data().iter().zip(gt.data()).zip(roi.mask.data()) {
        if *r == 1 {
            let d = p.f64() - f64::from(*y);
            sum += d * d;
            n += 1;
        }
    }
    Ok(sum / n as f64)
}

/// A validation case for temperature fitting.
pub struct CalibrationCase<'a, F> {
    pub set: &'a PredictionSet<F>,
    pub ground_truth: &'a VoxelGrid<u8>,
    pub roi: &'a RoiMask,
}

/// Grid search for the temperature minimizing mean ROI-masked ECE.
/// Returns the chosen temperature and the mean ECE of every candidate.
pub fn fit_temperature<F: Scalar + Voxel>(
    cases: &[CalibrationCase<'_, F>],
    candidates: &[f64],
    bins: usize,
) -> Result<(f64, Vec<f64>)> {
    if cases.is_empty() || candidates.is_empty() {
        return Err(QaError::invalid("temperature fit needs cases and candidates"));
    }
    let mut scores = Vec::with_capacity(candidates.len());
    for &t in candidates {
        let cfg = TemperatureConfig::enabled(t);
        let mut total = 0.0;
        for c in cases {
            let p = aggregate_mean(c.set, &cfg)?;
            total += ece(&p, c.ground_truth, c.roi, bins)?;
        }
        scores.push(total / cases.len() as f64);
    }
    let best = scores
        .iter()
        .enumerate()
        .fold(0, |b, (i, s)| if *s < scores[b] { i } else { b });
    Ok((candidates[best], scores))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volgrid::{Dims, Spacing};

    fn line<T: Voxel>(v: Vec<T>) -> VoxelGrid<T> {
        VoxelGrid::scalar(Dims::new(1, 1, v.len()), Spacing::isotropic(1.0).unwrap(), v).unwrap()
    }

    fn full_roi(n: usize) -> RoiMask {
        RoiMask::from_mask(line(vec![1u8; n]), 15.0).unwrap()
    }

    #[test]
    fn bins_are_right_closed() {
        assert_eq!(confidence_bin(0.0, 20), 0);
        assert_eq!(confidence_bin(0.05, 20), 0);
        assert_eq!(confidence_bin(0.75, 20), 14);
        assert_eq!(confidence_bin(0.7500001, 20), 15);
        assert_eq!(confidence_bin(1.0, 20), 19);
        assert_eq!(confidence_bin(0.5, 20), 9);
    }

    #[test]
    fn certain_and_correct_is_zero() {
        let p = line(vec![0.0f32, 1.0, 1.0, 0.0]);
        let y = line(vec![0u8, 1, 1, 0]);
        assert_eq!(ece(&p, &y, &full_roi(4), 20).unwrap(), 0.0);
        assert_eq!(brier(&p, &y, &full_roi(4)).unwrap(), 0.0);
    }

    #[test]
    fn single_bin_gap() {
        let p = line(vec![0.8f64; 10]);
        let y = line(vec![1u8, 1, 1, 1, 1, 1, 0, 0, 0, 0]);
        let e = ece(&p, &y, &full_roi(10), 20).unwrap();
        assert!((e - 0.2).abs() < 1e-12);
    }

    #[test]
    fn brier_reference() {
        let p = line(vec![0.5f64; 8]);
        let y = line(vec![1u8, 0, 1, 0, 1, 1, 0, 0]);
        assert_eq!(brier(&p, &y, &full_roi(8)).unwrap(), 0.25);
        let p = line(vec![0.7f64; 10]);
        let y = line(vec![1u8, 1, 1, 1, 1, 1, 0, 0, 0, 0]);
        assert!((brier(&p, &y, &full_roi(10)).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn roi_restricts_the_domain() {
        let p = line(vec![0.8f64, 0.8, 0.1]);
        let y = line(vec![1u8, 1, 1]);
        let roi = RoiMask::from_mask(line(vec![1u8, 1, 0]), 15.0).unwrap();
        assert!((ece(&p, &y, &roi, 20).unwrap() - 0.2).abs() < 1e-12);
        let empty = RoiMask::from_mask(line(vec![0u8; 3]), 15.0).unwrap();
        assert!(matches!(ece(&p, &y, &empty, 20), Err(QaError::EmptyRoi)));
        assert!(matches!(brier(&p, &y, &empty), Err(QaError::EmptyRoi)));
    }
}
