use rayon::prelude::*;

use super::confusion::ConfusionSets;
use crate::error::{QaError, Result};
use crate::scalar::Scalar;
use crate::volgrid::{Voxel, VoxelGrid};

/// Dice from set sizes; two empty sets score 1, one empty set scores 0.
#[inline]
pub fn dice_from_counts(a: usize, b: usize, both: usize) -> f64 {
    if a + b == 0 {
        1.0
    } else {
        2.0 * both as f64 / (a + b) as f64
    }
}

/// Dice similarity of two binary masks.
pub fn dsc(pred: &VoxelGrid<u8>, gt: &VoxelGrid<u8>) -> Result<f64> {
    pred.same_geometry(gt)?;
    pred.ensure_binary()?;
    gt.ensure_binary()?;
    let (a, b, both) = pred
        .data()
        .par_iter()
        .zip(gt.data().par_iter())
        .map(|(&p, &g)| (p as usize, g as usize, (p & g) as usize))
        .reduce(|| (0, 0, 0), |x, y| (x.0 + y.0, x.1 + y.1, x.2 + y.2));
    Ok(dice_from_counts(a, b, both))
}

/// Dice between `{u > tau}` and the error set FP ∪ FN.
pub fn ueo_at_threshold<F: Scalar + Voxel>(
    unc: &VoxelGrid<F>,
    errors: &ConfusionSets,
    tau: F,
) -> Result<f64> {
    unc.expect_channels(1)?;
    unc.ensure_unit_range("uncertainty")?;
    if errors.len() != unc.voxel_count() {
        return Err(QaError::GridMismatch(format!(
            "{} uncertainty voxels vs {} labelled voxels",
            unc.voxel_count(),
            errors.len()
        )));
    }
    let (flagged, both) = unc
        .data()
        .par_iter()
        .enumerate()
        .map(|(i, &u)| {
            let f = u > tau;
            (f as usize, (f && errors.is_error(i)) as usize)
        })
        .reduce(|| (0, 0), |x, y| (x.0 + y.0, x.1 + y.1));
    Ok(dice_from_counts(flagged, errors.error_count(), both))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::confusion;
    use crate::volgrid::{Dims, Spacing};

    #[test]
    fn dice_reference_values() {
        assert_eq!(dice_from_counts(100, 100, 80), 0.8);
        assert_eq!(dice_from_counts(50, 30, 20), 0.5);
        assert_eq!(dice_from_counts(0, 0, 0), 1.0);
        assert_eq!(dice_from_counts(3, 0, 0), 0.0);
    }

    #[test]
    fn dsc_extremes() {
        let sp = Spacing::isotropic(1.0).unwrap();
        let d = Dims::new(1, 1, 4);
        let a = VoxelGrid::scalar(d, sp, vec![1u8, 1, 0, 0]).unwrap();
        let b = VoxelGrid::scalar(d, sp, vec![0u8, 0, 1, 1]).unwrap();
        let e = VoxelGrid::scalar(d, sp, vec![0u8; 4]).unwrap();
        assert_eq!(dsc(&a, &a).unwrap(), 1.0);
        assert_eq!(dsc(&a, &b).unwrap(), 0.0);
        assert_eq!(dsc(&e, &e).unwrap(), 1.0);
    }

    #[test]
    fn ueo_matches_error_set() {
        let sp = Spacing::isotropic(1.0).unwrap();
        let d = Dims::new(1, 1, 4);
        let pred = VoxelGrid::scalar(d, sp, vec![1u8, 1, 0, 0]).unwrap();
        let gt = VoxelGrid::scalar(d, sp, vec![1u8, 0, 1, 0]).unwrap();
        let c = confusion(&pred, &gt).unwrap();
        let u = VoxelGrid::scalar(d, sp, vec![0.1f32, 0.9, 0.8, 0.0]).unwrap();
        assert_eq!(ueo_at_threshold(&u, &c, 0.5).unwrap(), 1.0);
        let u = VoxelGrid::scalar(d, sp, vec![0.9f32, 0.1, 0.1, 0.9]).unwrap();
        assert_eq!(ueo_at_threshold(&u, &c, 0.5).unwrap(), 0.0);
    }
}
