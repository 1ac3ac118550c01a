//! Test-time augmentation geometry.
//!
//! A transform rotates about the physical volume center (per axis, z then y
//! then x), translates by a voxel offset and scales intensities. Resampling
//! is trilinear in physical coordinates.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{QaError, Result};
use crate::rng::StreamRng;
use crate::scalar::Scalar;
use crate::volgrid::{Dims, Voxel, VoxelGrid};
use rand::SeedableRng;

pub const ROTATION_RANGE_DEG: (f64, f64) = (-5.0, 5.0);
pub const TRANSLATION_RANGE_VOX: (f64, f64) = (-5.0, 5.0);
pub const SCALE_RANGE: (f64, f64) = (0.9, 1.1);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TtaTransform {
    /// Rotation about the (z, y, x) axes, degrees.
    pub rotation_deg: [f64; 3],
    /// Offset along (z, y, x), voxels.
    pub translation_vox: [f64; 3],
    pub intensity_scale: f64,
    pub seed: u64,
}

impl TtaTransform {
    pub fn identity() -> Self {
        TtaTransform {
            rotation_deg: [0.0; 3],
            translation_vox: [0.0; 3],
            intensity_scale: 1.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let within = |v: f64, (lo, hi): (f64, f64)| v.is_finite() && v >= lo && v <= hi;
        let ok = self.rotation_deg.iter().all(|&r| within(r, ROTATION_RANGE_DEG))
            && self
                .translation_vox
                .iter()
                .all(|&t| within(t, TRANSLATION_RANGE_VOX))
            && within(self.intensity_scale, SCALE_RANGE);
        if ok {
            Ok(())
        } else {
            Err(QaError::invalid(format!("TTA parameters out of range: {self:?}")))
        }
    }

    fn is_geometric_identity(&self) -> bool {
        self.rotation_deg.iter().all(|r| *r == 0.0) && self.translation_vox.iter().all(|t| *t == 0.0)
    }
}

/// `n` transforms with parameters uniform in their ranges, reproducible from `seed`.
pub fn sample_tta_transforms(n: usize, seed: u64) -> Result<Vec<TtaTransform>> {
    if n < 1 {
        return Err(QaError::invalid("at least one TTA transform required"));
    }
    let mut rng = StreamRng::seed_from_u64(seed);
    let mut draw = |(lo, hi): (f64, f64)| rng.random_range(lo..=hi);
    Ok((0..n)
        .map(|i| {
            let rotation_deg = [
                draw(ROTATION_RANGE_DEG),
                draw(ROTATION_RANGE_DEG),
                draw(ROTATION_RANGE_DEG),
            ];
            let translation_vox = [
                draw(TRANSLATION_RANGE_VOX),
                draw(TRANSLATION_RANGE_VOX),
                draw(TRANSLATION_RANGE_VOX),
            ];
            let intensity_scale = draw(SCALE_RANGE);
            TtaTransform {
                rotation_deg,
                translation_vox,
                intensity_scale,
                seed: crate::rng::mix(seed, i as u64),
            }
        })
        .collect())
}

type Mat3 = [[f64; 3]; 3];

fn matmul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut c = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

fn transpose(a: &Mat3) -> Mat3 {
    let mut t = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            t[i][j] = a[j][i];
        }
    }
    t
}

fn apply(m: &Mat3, v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

/// Rotation in (z, y, x) coordinates: about z first, then y, then x.
fn rotation(deg: [f64; 3]) -> Mat3 {
    let (sz, cz) = deg[0].to_radians().sin_cos();
    let (sy, cy) = deg[1].to_radians().sin_cos();
    let (sx, cx) = deg[2].to_radians().sin_cos();
    // about z: mixes (y, x)
    let rz = [[1.0, 0.0, 0.0], [0.0, cz, -sz], [0.0, sz, cz]];
    // about y: mixes (z, x)
    let ry = [[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]];
    // about x: mixes (z, y)
    let rx = [[cx, -sx, 0.0], [sx, cx, 0.0], [0.0, 0.0, 1.0]];
    matmul(&rx, &matmul(&ry, &rz))
}

/// Value of samples that fall outside the source grid.
#[derive(Debug, Clone, Copy)]
enum Padding {
    Constant(f64),
    /// Nearest in-field position.
    Border,
}

/// Maps output voxel indices to fractional source indices.
struct Resampler {
    dims: Dims,
    spacing: [f64; 3],
    center: [f64; 3],
    matrix: Mat3,
    /// physical offset applied before the matrix
    pre_mm: [f64; 3],
    /// physical offset applied after the matrix
    post_mm: [f64; 3],
}

impl Resampler {
    /// Source position for output `y`: `R^T (y - c - t) + c`.
    fn pull(dims: Dims, spacing: [f64; 3], t: &TtaTransform) -> Self {
        let r = rotation(t.rotation_deg);
        let trans = [0, 1, 2].map(|a| t.translation_vox[a] * spacing[a]);
        Resampler {
            dims,
            spacing,
            center: Self::center(dims),
            matrix: transpose(&r),
            pre_mm: trans.map(|v| -v),
            post_mm: [0.0; 3],
        }
    }

    /// Source position for output `x`: `R (x - c) + c + t`.
    fn push(dims: Dims, spacing: [f64; 3], t: &TtaTransform) -> Self {
        let r = rotation(t.rotation_deg);
        let trans = [0, 1, 2].map(|a| t.translation_vox[a] * spacing[a]);
        Resampler {
            dims,
            spacing,
            center: Self::center(dims),
            matrix: r,
            pre_mm: [0.0; 3],
            post_mm: trans,
        }
    }

    fn center(dims: Dims) -> [f64; 3] {
        dims.as_array().map(|n| (n as f64 - 1.0) / 2.0)
    }

    #[inline]
    fn source(&self, z: usize, y: usize, x: usize) -> [f64; 3] {
        let idx = [z as f64, y as f64, x as f64];
        let q = [0, 1, 2].map(|a| (idx[a] - self.center[a]) * self.spacing[a] + self.pre_mm[a]);
        let r = apply(&self.matrix, q);
        [0, 1, 2].map(|a| snap((r[a] + self.post_mm[a]) / self.spacing[a] + self.center[a]))
    }

    fn resample<F: Scalar + Voxel>(&self, src: &VoxelGrid<F>, pad: Padding) -> Vec<F> {
        let max = self.dims.as_array().map(|n| (n - 1) as f64);
        let d = self.dims;
        let data = src.data();
        let mut out = Vec::with_capacity(d.len());
        for z in 0..d.nz {
            for y in 0..d.ny {
                for x in 0..d.nx {
                    let pos = self.source(z, y, x);
                    let v = match pad {
                        Padding::Constant(fill) => trilinear(data, d, pos).unwrap_or(fill),
                        Padding::Border => {
                            let clamped = [0, 1, 2].map(|a| pos[a].clamp(0.0, max[a]));
                            trilinear(data, d, clamped).expect("clamped inside")
                        }
                    };
                    out.push(F::of(v));
                }
            }
        }
        out
    }
}

/// Rounds positions within 1e-9 of a grid index onto it.
#[inline]
fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < 1e-9 {
        r
    } else {
        v
    }
}

fn trilinear<F: Scalar>(data: &[F], d: Dims, pos: [f64; 3]) -> Option<f64> {
    let ext = d.as_array();
    let mut lo = [0usize; 3];
    let mut w = [0.0f64; 3];
    for a in 0..3 {
        let p = pos[a];
        let max = (ext[a] - 1) as f64;
        if !(p >= 0.0 && p <= max) {
            return None;
        }
        let f = p.floor();
        lo[a] = (f as usize).min(ext[a].saturating_sub(2));
        w[a] = p - lo[a] as f64;
    }
    let at = |z: usize, y: usize, x: usize| data[d.index(z, y, x)].f64();
    let hi = [0, 1, 2].map(|a| (lo[a] + 1).min(ext[a] - 1));
    let mut acc = 0.0;
    for (dz, wz) in [(lo[0], 1.0 - w[0]), (hi[0], w[0])] {
        if wz == 0.0 {
            continue;
        }
        for (dy, wy) in [(lo[1], 1.0 - w[1]), (hi[1], w[1])] {
            if wy == 0.0 {
                continue;
            }
            for (dx, wx) in [(lo[2], 1.0 - w[2]), (hi[2], w[2])] {
                if wx == 0.0 {
                    continue;
                }
                acc += wz * wy * wx * at(dz, dy, dx);
            }
        }
    }
    Some(acc)
}

/// Augments an input volume. Out-of-field voxels take the volume minimum
/// before intensity scaling.
pub fn apply_transform<F: Scalar + Voxel>(vol: &VoxelGrid<F>, t: &TtaTransform) -> Result<VoxelGrid<F>> {
    vol.expect_channels(1)?;
    vol.ensure_finite("TTA input")?;
    let scale = F::of(t.intensity_scale);
    if t.is_geometric_identity() {
        let data = vol.data().iter().map(|&v| v * scale).collect();
        return Ok(vol.like(data));
    }
    let fill = vol
        .data()
        .iter()
        .fold(f64::INFINITY, |m, v| m.min(v.f64()));
    let r = Resampler::pull(vol.dims(), vol.spacing().as_array(), t);
    let data = r
        .resample(vol, Padding::Constant(fill))
        .into_iter()
        .map(|v| v * scale)
        .collect();
    Ok(vol.like(data))
}

/// Maps a probability map predicted on an augmented input back to the original
/// frame. Intensity scaling is not undone. Voxels the augmented field of view
/// did not cover take the value at the nearest covered position.
pub fn invert_transform_prob<F: Scalar + Voxel>(
    prob: &VoxelGrid<F>,
    t: &TtaTransform,
) -> Result<VoxelGrid<F>> {
    prob.expect_channels(1)?;
    if t.is_geometric_identity() {
        return Ok(prob.clone());
    }
    let r = Resampler::push(prob.dims(), prob.spacing().as_array(), t);
    let data = r
        .resample(prob, Padding::Border)
        .into_iter()
        .map(|v| v.max(F::zero()).min(F::one()))
        .collect();
    Ok(prob.like(data))
}
