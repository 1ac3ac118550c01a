//! Boundary band used as the domain of the calibration metrics.
//!
//! The ROI is every voxel whose center lies within `delta_mm` of the inner
//! surface of the prediction or of the ground truth. Distances come from an
//! exact separable squared Euclidean distance transform (lower envelope of
//! parabolas, one pass per axis) honouring anisotropic spacing.

use rayon::prelude::*;


use crate::error::{QaError, Result};
use crate::volgrid::{Dims, Spacing, VoxelGrid};

pub const DEFAULT_DELTA_MM: f64 = 15.0;

#[derive(Debug, Clone)]
pub struct RoiMask {
    pub mask: VoxelGrid<u8>,
    pub delta_mm: f64,
    pub source_pred: String,
    pub voxel_count: usize,
}

impl RoiMask {
    pub fn from_mask(mask: VoxelGrid<u8>, delta_mm: f64) -> Result<Self> {
        mask.ensure_binary()?;
        let voxel_count = mask.count_ones();
        Ok(RoiMask {
            mask,
            delta_mm,
            source_pred: String::new(),
            voxel_count,
        })
    }

    pub fn with_source(mut self, method_id: impl Into<String>) -> Self {
        self.source_pred = method_id.into();
        self
    }

    #[inline]
    pub fn contains(&self, i: usize) -> bool {
        self.mask.data()[i] == 1
    }
}

/// Inner surface: foreground voxels with a background 6-neighbour or on the
/// volume edge.
pub fn boundary(mask: &VoxelGrid<u8>) -> Result<VoxelGrid<u8>> {
    mask.expect_channels(1)?;
    mask.ensure_binary()?;
    let d = mask.dims();
    let m = mask.data();
    let plane = d.ny * d.nx;
    let out: Vec<u8> = (0..d.len())
        .into_par_iter()
        .map(|i| {
            if m[i] == 0 {
                return 0;
            }
            let (z, y, x) = d.coords(i);
            let edge = z == 0
                || y == 0
                || x == 0
                || z + 1 == d.nz
                || y + 1 == d.ny
                || x + 1 == d.nx;
            if edge {
                return 1;
            }
            let bg = m[i - 1] == 0
                || m[i + 1] == 0
                || m[i - d.nx] == 0
                || m[i + d.nx] == 0
                || m[i - plane] == 0
                || m[i + plane] == 0;
            u8::from(bg)
        })
        .collect();
    Ok(mask.like(out))
}

/// One-dimensional squared distance transform of sampled function `f`
/// (`INFINITY` where undefined) with squared sample spacing `w`.
struct Envelope {
    sites: Vec<usize>,
    bounds: Vec<f64>,
}

impl Envelope {
    fn new(n: usize) -> Self {
        Envelope {
            sites: vec![0; n],
            bounds: vec![0.0; n + 1],
        }
    }

    fn transform(&mut self, f: &[f64], w: f64, out: &mut [f64]) {
        let n = f.len();
        let v = &mut self.sites;
        let z = &mut self.bounds;
        let mut k: isize = -1;
        let meet = |p: usize, q: usize| {
            let (pf, qf) = (p as f64, q as f64);
            ((f[q] + w * qf * qf) - (f[p] + w * pf * pf)) / (2.0 * w * (qf - pf))
        };
        for q in 0..n {
            if !f[q].is_finite() {
                continue;
            }
            if k < 0 {
                k = 0;
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
                continue;
            }
            let mut s = meet(v[k as usize], q);
            while s <= z[k as usize] {
                k -= 1;
                if k < 0 {
                    break;
                }
                s = meet(v[k as usize], q);
            }
            if k < 0 {
                k = 0;
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
                continue;
            }
            k += 1;
            let ku = k as usize;
            v[ku] = q;
            z[ku] = s;
            z[ku + 1] = f64::INFINITY;
        }
        if k < 0 {
            out.fill(f64::INFINITY);
            return;
        }
        let mut j = 0usize;
        for (q, o) in out.iter_mut().enumerate() {
            let qf = q as f64;
            while z[j + 1] < qf {
                j += 1;
            }
            let d = qf - v[j] as f64;
            *o = w * d * d + f[v[j]];
        }
    }
}

/// Squared distance in mm² from every voxel center to the nearest seed center.
pub fn edt_squared(seeds: &VoxelGrid<u8>, spacing: Spacing) -> Result<Vec<f64>> {
    seeds.expect_channels(1)?;
    seeds.ensure_binary()?;
    if !seeds.data().par_iter().any(|v| *v == 1) {
        return Err(QaError::EmptySeeds);
    }
    let d = seeds.dims();
    let [wz, wy, wx] = spacing.as_array().map(|s| s * s);
    let mut g: Vec<f64> = seeds
        .data()
        .par_iter()
        .map(|v| if *v == 1 { 0.0 } else { f64::INFINITY })
        .collect();

    // x: contiguous lines
    g.par_chunks_mut(d.nx).for_each_init(
        || (Envelope::new(d.nx), vec![0.0; d.nx]),
        |(env, buf), line| {
            buf.copy_from_slice(line);
            env.transform(buf, wx, line);
        },
    );

    // y: columns inside each z slab
    g.par_chunks_mut(d.ny * d.nx).for_each_init(
        || (Envelope::new(d.ny), vec![0.0; d.ny], vec![0.0; d.ny]),
        |(env, src, dst), slab| {
            for x in 0..d.nx {
                for y in 0..d.ny {
                    src[y] = slab[y * d.nx + x];
                }
                env.transform(src, wy, dst);
                for y in 0..d.ny {
                    slab[y * d.nx + x] = dst[y];
                }
            }
        },
    );

    // z: lines cross slabs; compute per y-row in parallel, scatter serially
    const ROWS: usize = 16;
    let plane = d.ny * d.nx;
    for y0 in (0..d.ny).step_by(ROWS) {
        let y1 = (y0 + ROWS).min(d.ny);
        let src = &g;
        let blocks: Vec<Vec<f64>> = (y0..y1)
            .into_par_iter()
            .map_init(
                || (Envelope::new(d.nz), vec![0.0; d.nz]),
                |(env, line), y| {
                    let mut block = vec![0.0; d.nz * d.nx];
                    for x in 0..d.nx {
                        for z in 0..d.nz {
                            line[z] = src[z * plane + y * d.nx + x];
                        }
                        env.transform(line, wz, &mut block[x * d.nz..(x + 1) * d.nz]);
                    }
                    block
                },
            )
            .collect();
        for (y, block) in (y0..y1).zip(blocks) {
            for x in 0..d.nx {
                for z in 0..d.nz {
                    g[z * plane + y * d.nx + x] = block[x * d.nz + z];
                }
            }
        }
    }
    Ok(g)
}

/// Euclidean distance in mm to the nearest seed.
pub fn edt(seeds: &VoxelGrid<u8>, spacing: Spacing) -> Result<VoxelGrid<f32>> {
    let sq = edt_squared(seeds, spacing)?;
    let data = sq.par_iter().map(|v| v.sqrt() as f32).collect();
    VoxelGrid::new(seeds.dims(), spacing, 1, data)
}

/// Union of the `delta_mm` bands around both inner surfaces.
pub fn build_roi(pred_mask: &VoxelGrid<u8>, gt_mask: &VoxelGrid<u8>, delta_mm: f64) -> Result<RoiMask> {
    pred_mask.same_geometry(gt_mask)?;
    if !(delta_mm.is_finite() && delta_mm > 0.0) {
        return Err(QaError::invalid(format!("delta must be positive, got {delta_mm}")));
    }
    let ba = boundary(pred_mask)?;
    let bb = boundary(gt_mask)?;
    let seeds: Vec<u8> = ba
        .data()
        .par_iter()
        .zip(bb.data().par_iter())
        .map(|(a, b)| a | b)
        .collect();
    let seeds = pred_mask.like(seeds);
    let sq = match edt_squared(&seeds, pred_mask.spacing()) {
        Ok(sq) => sq,
        Err(QaError::EmptySeeds) => return Err(QaError::EmptyMasks),
        Err(e) => return Err(e),
    };
    let limit = delta_mm * delta_mm;
    let mask: Vec<u8> = sq.par_iter().map(|v| u8::from(*v <= limit)).collect();
    let voxel_count = mask.iter().filter(|v| **v == 1).count();
    Ok(RoiMask {
        mask: pred_mask.like(mask),
        delta_mm,
        source_pred: String::new(),
        voxel_count,
    })
}

/// Physical distance between two voxel centers.
pub fn center_distance(d: Dims, spacing: Spacing, a: usize, b: usize) -> f64 {
    let (az, ay, ax) = d.coords(a);
    let (bz, by, bx) = d.coords(b);
    let dz = (az as f64 - bz as f64) * spacing.z;
    let dy = (ay as f64 - by as f64) * spacing.y;
    let dx = (ax as f64 - bx as f64) * spacing.x;
    (dz * dz + dy * dy + dx * dx).sqrt()
}
