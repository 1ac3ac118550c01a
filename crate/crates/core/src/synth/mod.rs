//! Ellipsoid phantoms with known foreground probability, for testing without data.
//!
//! Each voxel gets an approximate signed distance `sd` (mm, positive inside)
//! to the union of the blobs and a true probability
//! `p* = sigmoid(gain * sd + noise)`. Members carry logits
//! `(0, s * (logit(p*) + jitter))`, so a temperature of `s` undoes the
//! sharpening. A CT-like intensity is derived from `p*`, and
//! [`SyntheticPredictor`] maps it back to logits for augmentation tests.

pub mod oracle;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QaError, Result};
use crate::rng::{hash_str, mix, stream};
use crate::scalar::Scalar;
use crate::uq::{apply_transform, MemberKind, PredictionSet, Predictor, TtaTransform};
use crate::volgrid::{CaseRecord, Dims, Spacing, Voxel, VoxelGrid};

pub const CT_BACKGROUND_HU: f64 = -50.0;
pub const CT_FOREGROUND_HU: f64 = 150.0;

const KEY_NOISE: u64 = 1;
const KEY_LABELS: u64 = 2;
const KEY_SHARED: u64 = 3;
const KEY_MEMBER: u64 = 0x100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    /// Voxel coordinates (z, y, x); may be fractional.
    pub center: [f64; 3],
    pub radii_mm: [f64; 3],
    /// 1 adds the ellipsoid to the foreground, 0 carves it out.
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub dims: Dims,
    pub spacing: Spacing,
    /// Applied in order.
    pub blobs: Vec<Blob>,
    /// Logit per mm of signed distance.
    pub logit_gain: f64,
    pub noise_sigma: f64,
    /// Logit sharpening `s`; 1 is calibrated.
    pub sharpen: f64,
    pub member_count: usize,
    /// Per-voxel logit jitter shared by all members and by every method
    /// generated from the same seed (one training run).
    #[serde(default)]
    pub shared_jitter: f64,
    /// Per-voxel, per-member logit jitter standard deviation; keyed by method id.
    pub member_jitter: f64,
    /// Draw labels from `p*` instead of using the ellipsoid mask.
    pub bernoulli_labels: bool,
    pub seed: u64,
}

impl PhantomSpec {
    /// One centered sphere filling about half of each axis.
    pub fn sphere(dims: Dims, spacing: Spacing, seed: u64) -> Self {
        let center = dims.as_array().map(|n| (n as f64 - 1.0) / 2.0);
        let s = spacing.as_array();
        let r = (0..3)
            .map(|a| dims.as_array()[a] as f64 * s[a] / 4.0)
            .fold(f64::INFINITY, f64::min);
        PhantomSpec {
            dims,
            spacing,
            blobs: vec![Blob {
                center,
                radii_mm: [r; 3],
                label: 1,
            }],
            logit_gain: 1.0,
            noise_sigma: 0.0,
            sharpen: 1.0,
            member_count: 1,
            shared_jitter: 0.0,
            member_jitter: 0.0,
            bernoulli_labels: false,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(QaError::Dims(self.dims.as_array()));
        }
        if self.blobs.is_empty() {
            return Err(QaError::invalid("phantom needs at least one blob"));
        }
        let n = self.dims.as_array();
        for (i, b) in self.blobs.iter().enumerate() {
            if b.radii_mm.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
                return Err(QaError::invalid(format!("blob {i}: radii must be positive")));
            }
            if (0..3).any(|a| !(b.center[a] >= 0.0 && b.center[a] <= n[a] as f64 - 1.0)) {
                return Err(QaError::invalid(format!(
                    "blob {i}: center {:?} outside the volume",
                    b.center
                )));
            }
            if b.label > 1 {
                return Err(QaError::invalid(format!("blob {i}: label must be 0 or 1")));
            }
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        let non_negative = |v: f64| v.is_finite() && v >= 0.0;
        if !positive(self.logit_gain) || !positive(self.sharpen) {
            return Err(QaError::invalid("logit_gain and sharpen must be positive"));
        }
        if !non_negative(self.noise_sigma)
            || !non_negative(self.member_jitter)
            || !non_negative(self.shared_jitter)
        {
            return Err(QaError::invalid("noise and jitter levels must be non-negative"));
        }
        if self.member_count == 0 {
            return Err(QaError::invalid("member_count must be at least 1"));
        }
        Ok(())
    }
}

/// Approximate signed distance (mm, positive inside) to an ellipsoid surface,
/// from the first-order expansion of `|q / r| = 1`.
pub fn ellipsoid_signed_distance(q_mm: [f64; 3], radii_mm: [f64; 3]) -> f64 {
    let k = (0..3).map(|a| (q_mm[a] / radii_mm[a]).powi(2)).sum::<f64>().sqrt();
    let g = (0..3)
        .map(|a| (q_mm[a] / (radii_mm[a] * radii_mm[a])).powi(2))
        .sum::<f64>()
        .sqrt();
    if g == 0.0 {
        return radii_mm.iter().copied().fold(f64::INFINITY, f64::min);
    }
    (1.0 - k) * k / g
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub struct SyntheticCase<F> {
    pub record: CaseRecord,
    pub prediction: PredictionSet<F>,
    /// True foreground probability.
    pub p_star: VoxelGrid<F>,
    pub sharpen: f64,
}

impl<F: Scalar + Voxel> SyntheticCase<F> {
    /// Logits member `m` would produce on the CT transformed by `t`, in the
    /// transformed frame: the image-derived logit of the transformed CT plus
    /// the member's own jitter, all sharpened.
    pub fn tta_member(&self, m: usize, t: &TtaTransform) -> Result<VoxelGrid<F>> {
        let ct = self
            .record
            .ct
            .as_ref()
            .ok_or_else(|| QaError::invalid("synthetic case has no CT"))?
            .cast::<F>();
        let moved = apply_transform(&ct, t)?;
        let seen = Predictor::<F>::predict(&SyntheticPredictor { sharpen: self.sharpen }, &moved)?;
        let member = self
            .prediction
            .members()
            .get(m)
            .ok_or_else(|| QaError::invalid(format!("no member {m}")))?;
        let n = member.voxel_count();
        let mut data = vec![F::zero(); 2 * n];
        let fg = member.channel(1);
        for i in 0..n {
            let z = self.p_star.data()[i].f64().clamp(1e-6, 1.0 - 1e-6);
            let jitter = fg[i].f64() - self.sharpen * (z / (1.0 - z)).ln();
            data[n + i] = F::of(seen.channel(1)[i].f64() + jitter);
        }
        VoxelGrid::new(member.dims(), member.spacing(), 2, data)
    }
}

/// Pre-sharpening logit `gain * sd + noise` for every voxel.
fn base_logits(spec: &PhantomSpec) -> Vec<f64> {
    let d = spec.dims;
    let s = spec.spacing.as_array();
    let plane = d.ny * d.nx;
    let noise = Normal::new(0.0, spec.noise_sigma).expect("validated sigma");
    let mut out = vec![0.0; d.len()];
    out.par_chunks_mut(plane).enumerate().for_each(|(z, slab)| {
        let mut rng = stream(mix(spec.seed, KEY_NOISE), z as u64);
        for (j, v) in slab.iter_mut().enumerate() {
            let idx = [z as f64, (j / d.nx) as f64, (j % d.nx) as f64];
            let mut sd = f64::NEG_INFINITY;
            for b in &spec.blobs {
                let q = [0, 1, 2].map(|a| (idx[a] - b.center[a]) * s[a]);
                let bsd = ellipsoid_signed_distance(q, b.radii_mm);
                sd = if b.label == 1 { sd.max(bsd) } else { sd.min(-bsd) };
            }
            let e = if spec.noise_sigma > 0.0 {
                noise.sample(&mut rng)
            } else {
                0.0
            };
            *v = spec.logit_gain * sd + e;
        }
    });
    out
}

/// Ellipsoid mask of the spec: voxels whose signed distance is non-negative.
pub fn phantom_mask(spec: &PhantomSpec) -> Result<VoxelGrid<u8>> {
    spec.validate()?;
    let clean = PhantomSpec {
        noise_sigma: 0.0,
        ..spec.clone()
    };
    let data = base_logits(&clean).iter().map(|z| u8::from(*z >= 0.0)).collect();
    VoxelGrid::scalar(spec.dims, spec.spacing, data)
}

/// Materializes a phantom: ground truth, CT, true probabilities and members.
pub fn generate_case<F: Scalar + Voxel>(
    case_id: &str,
    spec: &PhantomSpec,
    method_id: &str,
) -> Result<SyntheticCase<F>> {
    spec.validate()?;
    let d = spec.dims;
    let plane = d.ny * d.nx;
    let z_base = base_logits(spec);
    let p_star: Vec<f64> = z_base.par_iter().map(|z| sigmoid(*z)).collect();

    let labels: Vec<u8> = if spec.bernoulli_labels {
        let mut l = vec![0u8; d.len()];
        l.par_chunks_mut(plane).enumerate().for_each(|(z, slab)| {
            let mut rng = stream(mix(spec.seed, KEY_LABELS), z as u64);
            for (j, v) in slab.iter_mut().enumerate() {
                *v = u8::from(rng.random::<f64>() < p_star[z * plane + j]);
            }
        });
        l
    } else {
        let clean = PhantomSpec {
            noise_sigma: 0.0,
            ..spec.clone()
        };
        base_logits(&clean).iter().map(|z| u8::from(*z >= 0.0)).collect()
    };
    let gt = VoxelGrid::scalar(d, spec.spacing, labels)?;
    let ct: Vec<f32> = p_star
        .iter()
        .map(|p| (CT_BACKGROUND_HU + (CT_FOREGROUND_HU - CT_BACKGROUND_HU) * p) as f32)
        .collect();
    let record = CaseRecord::new(case_id, gt)?.with_ct(VoxelGrid::scalar(d, spec.spacing, ct)?)?;

    let shared = Normal::new(0.0, spec.shared_jitter).expect("validated jitter");
    let mut common = vec![0.0f64; d.len()];
    if spec.shared_jitter > 0.0 {
        common.par_chunks_mut(plane).enumerate().for_each(|(z, slab)| {
            let mut rng = stream(mix(spec.seed, KEY_SHARED), z as u64);
            for v in slab.iter_mut() {
                *v = shared.sample(&mut rng);
            }
        });
    }
    let jitter = Normal::new(0.0, spec.member_jitter).expect("validated jitter");
    // members of different methods are different models
    let member_seed = mix(spec.seed, hash_str(method_id));
    let mut members = Vec::with_capacity(spec.member_count);
    for m in 0..spec.member_count {
        let mut fg = vec![F::zero(); d.len()];
        fg.par_chunks_mut(plane).enumerate().for_each(|(z, slab)| {
            let mut rng = stream(mix(member_seed, KEY_MEMBER + m as u64), z as u64);
            for (j, v) in slab.iter_mut().enumerate() {
                let e = if spec.member_jitter > 0.0 {
                    jitter.sample(&mut rng)
                } else {
                    0.0
                };
                let i = z * plane + j;
                *v = F::of(spec.sharpen * (z_base[i] + common[i] + e));
            }
        });
        let mut data = vec![F::zero(); d.len()];
        data.extend(fg);
        members.push(VoxelGrid::new(d, spec.spacing, 2, data)?);
    }
    let provenance = (0..spec.member_count).map(|m| format!("synth:{m}")).collect();
    let prediction = PredictionSet::new(method_id, MemberKind::Logits, members, provenance)?;
    let p_star = VoxelGrid::scalar(d, spec.spacing, p_star.into_iter().map(F::of).collect())?;
    Ok(SyntheticCase {
        record,
        prediction,
        p_star,
        sharpen: spec.sharpen,
    })
}

/// Inverts the phantom CT mapping: logits `(0, s * logit(p))` with `p`
/// recovered from intensity.
#[derive(Debug, Clone, Copy)]
pub struct SyntheticPredictor {
    pub sharpen: f64,
}

impl<F: Scalar + Voxel> Predictor<F> for SyntheticPredictor {
    fn predict(&self, input: &VoxelGrid<F>) -> Result<VoxelGrid<F>> {
        input.expect_channels(1)?;
        let n = input.voxel_count();
        let mut data = vec![F::zero(); 2 * n];
        data[n..]
            .par_iter_mut()
            .zip(input.data().par_iter())
            .for_each(|(o, v)| {
                let p = ((v.f64() - CT_BACKGROUND_HU) / (CT_FOREGROUND_HU - CT_BACKGROUND_HU))
                    .clamp(1e-6, 1.0 - 1e-6);
                *o = F::of(self.sharpen * (p / (1.0 - p)).ln());
            });
        VoxelGrid::new(input.dims(), input.spacing(), 2, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::uq::{aggregate_mean, TemperatureConfig};

    fn small() -> PhantomSpec {
        PhantomSpec::sphere(Dims::new(12, 14, 16), Spacing::new(2.0, 1.0, 1.0).unwrap(), 4)
    }

    #[test]
    fn clean_phantom_is_sigmoid_of_distance() {
        let spec = small();
        let case = generate_case::<f32>("c", &spec, "m").unwrap();
        let p = aggregate_mean(&case.prediction, &TemperatureConfig::disabled()).unwrap();
        let s = spec.spacing.as_array();
        let b = &spec.blobs[0];
        for i in 0..spec.dims.len() {
            let (z, y, x) = spec.dims.coords(i);
            let q = [z as f64, y as f64, x as f64];
            let q = [0, 1, 2].map(|a| (q[a] - b.center[a]) * s[a]);
            let want = sigmoid(ellipsoid_signed_distance(q, b.radii_mm));
            assert!((f64::from(p.data()[i]) - want).abs() < 1e-6);
        }
        assert_eq!(case.record.ground_truth.count_ones(), phantom_mask(&spec).unwrap().count_ones());
    }

    #[test]
    fn distance_is_exact_on_axes() {
        let r = [3.0, 5.0, 7.0];
        assert!((ellipsoid_signed_distance([0.0, 0.0, 9.0], r) + 2.0).abs() < 1e-12);
        assert!((ellipsoid_signed_distance([1.0, 0.0, 0.0], r) - 2.0).abs() < 1e-12);
        assert_eq!(ellipsoid_signed_distance([0.0; 3], r), 3.0);
    }

    #[test]
    fn seeded_generation_repeats() {
        let mut spec = small();
        spec.noise_sigma = 0.5;
        spec.member_jitter = 0.3;
        spec.member_count = 3;
        spec.bernoulli_labels = true;
        let a = generate_case::<f32>("c", &spec, "m").unwrap();
        let b = generate_case::<f32>("c", &spec, "m").unwrap();
        assert_eq!(a.record.ground_truth, b.record.ground_truth);
        for (x, y) in a.prediction.members().iter().zip(b.prediction.members()) {
            assert_eq!(x, y);
        }
        spec.seed += 1;
        let c = generate_case::<f32>("c", &spec, "m").unwrap();
        assert_ne!(a.record.ground_truth, c.record.ground_truth);
    }

    #[test]
    fn invalid_specs() {
        let mut spec = small();
        spec.blobs.clear();
        assert!(generate_case::<f32>("c", &spec, "m").is_err());
        let mut spec = small();
        spec.blobs[0].center = [20.0, 0.0, 0.0];
        assert!(generate_case::<f32>("c", &spec, "m").is_err());
        let mut spec = small();
        spec.member_count = 0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn identity_augmentation_reproduces_member() {
        let mut spec = small();
        spec.member_count = 2;
        spec.member_jitter = 0.4;
        spec.shared_jitter = 0.3;
        let case = generate_case::<f32>("c", &spec, "m").unwrap();
        let same = case.tta_member(1, &TtaTransform::identity()).unwrap();
        let want = case.prediction.members()[1].channel(1);
        for (i, (a, b)) in same.channel(1).iter().zip(want).enumerate() {
            if case.p_star.data()[i] > 1e-3 && case.p_star.data()[i] < 1.0 - 1e-3 {
                assert!((a - b).abs() < 1e-3, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn predictor_inverts_ct() {
        let spec = small();
        let case = generate_case::<f32>("c", &spec, "m").unwrap();
        let ct = case.record.ct.as_ref().unwrap();
        let logits = Predictor::<f32>::predict(&SyntheticPredictor { sharpen: 1.0 }, ct).unwrap();
        let fg = logits.channel(1);
        let want = case.prediction.members()[0].channel(1);
        for (a, b) in fg.iter().zip(want) {
            // both clamp near saturation; compare where p* is moderate
            if b.abs() < 8.0 {
                assert!((a - b).abs() < 1e-3, "{a} vs {b}");
            }
        }
    }
}
