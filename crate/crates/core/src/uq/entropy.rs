use rayon::prelude::*;

use crate::error::Result;
use crate::scalar::Scalar;
use crate::volgrid::{Voxel, VoxelGrid};

/// Stabilizer inside the logarithms.
pub const ENTROPY_EPS: f64 = 1e-10;

/// Binary entropy in bits, clamped to `[0, 1]`.
#[inline]
pub fn binary_entropy<F: Scalar>(p: F) -> F {
    let eps = F::of(ENTROPY_EPS);
    let q = F::one() - p;
    let h = -(p * (p + eps).log2()) - q * (q + eps).log2();
    h.max(F::zero()).min(F::one())
}

/// Voxel-wise entropy of a foreground probability map.
pub fn entropy_map<F: Scalar + Voxel>(prob: &VoxelGrid<F>) -> Result<VoxelGrid<F>> {
    prob.expect_channels(1)?;
    prob.ensure_unit_range("probability")?;
    let data = prob.data().par_iter().map(|&p| binary_entropy(p)).collect();
    Ok(prob.like(data))
}
