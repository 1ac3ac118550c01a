use serde::{Deserialize, Serialize};

use super::temperature::{temperature_softmax, TemperatureConfig};
use crate::error::{QaError, Result};
use crate::scalar::Scalar;
use crate::volgrid::{Dims, Spacing, Voxel, VoxelGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MemberKind {
    /// Two channels, (background, foreground).
    Logits,
    /// One channel, foreground probability.
    Probability,
}

impl MemberKind {
    pub fn channels(self) -> usize {
        match self {
            MemberKind::Logits => 2,
            MemberKind::Probability => 1,
        }
    }
}

/// The member volumes of one (method, case) pair.
#[derive(Debug, Clone)]
pub struct PredictionSet<F> {
    pub method_id: String,
    members: Vec<VoxelGrid<F>>,
    kind: MemberKind,
    provenance: Vec<String>,
}

impl<F: Scalar + Voxel> PredictionSet<F> {
    pub fn new(
        method_id: impl Into<String>,
        kind: MemberKind,
        members: Vec<VoxelGrid<F>>,
        provenance: Vec<String>,
    ) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| QaError::invalid("prediction set has no members"))?;
        if provenance.len() != members.len() {
            return Err(QaError::invalid(format!(
                "{} provenance tags for {} members",
                provenance.len(),
                members.len()
            )));
        }
        for m in &members {
            first.same_geometry(m)?;
            m.expect_channels(kind.channels())?;
            match kind {
                MemberKind::Probability => m.ensure_unit_range("member probability")?,
                MemberKind::Logits => m.ensure_finite("member logits")?,
            }
        }
        Ok(PredictionSet {
            method_id: method_id.into(),
            members,
            kind,
            provenance,
        })
    }

    pub fn members(&self) -> &[VoxelGrid<F>] {
        &self.members
    }

    pub fn kind(&self) -> MemberKind {
        self.kind
    }

    pub fn provenance(&self) -> &[String] {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Mean foreground probability of a set. Logit members are temperature-scaled
/// individually before averaging; probability members cannot be.
pub fn aggregate_mean<F: Scalar + Voxel>(
    set: &PredictionSet<F>,
    cfg: &TemperatureConfig,
) -> Result<VoxelGrid<F>> {
    match set.kind {
        MemberKind::Probability => {
            if cfg.enabled {
                return Err(QaError::invalid(
                    "temperature scaling requires logit members",
                ));
            }
            mean_probability(&set.members)
        }
        MemberKind::Logits => {
            let probs = set
                .members
                .iter()
                .map(|m| temperature_softmax(m, cfg))
                .collect::<Result<Vec<_>>>()?;
            mean_probability(&probs)
        }
    }
}

/// Voxel-wise arithmetic mean of single-channel probability grids, bounded by
/// the member-wise min and max.
pub fn mean_probability<F: Scalar + Voxel>(members: &[VoxelGrid<F>]) -> Result<VoxelGrid<F>> {
    let first = members
        .first()
        .ok_or_else(|| QaError::invalid("nothing to aggregate"))?;
    if members.len() == 1 {
        first.expect_channels(1)?;
        return Ok(first.clone());
    }
    let mut acc = ProbabilityMean::new();
    for m in members {
        acc.push(m)?;
    }
    acc.finish()
}

/// Streaming form of [`mean_probability`] with identical results; only the
/// running sum and bounds are kept.
#[derive(Debug, Clone)]
pub struct ProbabilityMean<F> {
    geometry: Option<(Dims, Spacing)>,
    sum: Vec<f64>,
    lo: Vec<F>,
    hi: Vec<F>,
    count: usize,
}

impl<F: Scalar + Voxel> Default for ProbabilityMean<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar + Voxel> ProbabilityMean<F> {
    pub fn new() -> Self {
        ProbabilityMean {
            geometry: None,
            sum: Vec::new(),
            lo: Vec::new(),
            hi: Vec::new(),
            count: 0,
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn push(&mut self, m: &VoxelGrid<F>) -> Result<()> {
        m.expect_channels(1)?;
        match self.geometry {
            Some((d, s)) => {
                if (d, s) != (m.dims(), m.spacing()) {
                    return Err(QaError::GridMismatch(format!(
                        "member grid {:?} @ {:?} vs {:?} @ {:?}",
                        m.dims().as_array(),
                        m.spacing().as_array(),
                        d.as_array(),
                        s.as_array()
                    )));
                }
            }
            None => {
                self.sum = vec![0.0; m.voxel_count()];
                self.lo = m.data().to_vec();
                self.hi = self.lo.clone();
                self.geometry = Some((m.dims(), m.spacing()));
            }
        }
        for (i, &v) in m.data().iter().enumerate() {
            self.sum[i] += v.f64();
            self.lo[i] = self.lo[i].min(v);
            self.hi[i] = self.hi[i].max(v);
        }
        self.count += 1;
        Ok(())
    }

    pub fn finish(self) -> Result<VoxelGrid<F>> {
        let (dims, spacing) = self
            .geometry
            .ok_or_else(|| QaError::invalid("nothing to aggregate"))?;
        let inv = 1.0 / self.count as f64;
        let data = self
            .sum
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(s, (&l, &h))| F::of(s * inv).max(l).min(h))
            .collect();
        VoxelGrid::scalar(dims, spacing, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prob(v: &[f32]) -> VoxelGrid<f32> {
        VoxelGrid::scalar(
            Dims::new(1, 1, v.len()),
            Spacing::isotropic(1.0).unwrap(),
            v.to_vec(),
        )
        .unwrap()
    }

    fn tags(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("m{i}")).collect()
    }

    #[test]
    fn single_member_identity() {
        let m = prob(&[0.1, 0.7, 0.3]);
        let set = PredictionSet::new("BASE", MemberKind::Probability, vec![m.clone()], tags(1))
            .unwrap();
        assert_eq!(aggregate_mean(&set, &TemperatureConfig::disabled()).unwrap(), m);
    }

    #[test]
    fn arithmetic_mean_at_voxel() {
        let set = PredictionSet::new(
            "DE",
            MemberKind::Probability,
            vec![prob(&[0.2]), prob(&[0.4]), prob(&[0.6])],
            tags(3),
        )
        .unwrap();
        let p = aggregate_mean(&set, &TemperatureConfig::disabled()).unwrap();
        assert!((p.data()[0] - 0.4).abs() < 1e-7);
    }

    #[test]
    fn streaming_mean_matches() {
        let ms = vec![prob(&[0.1, 0.9, 0.3]), prob(&[0.2, 0.8, 0.35]), prob(&[0.7, 0.1, 0.3])];
        let mut acc = ProbabilityMean::new();
        for m in &ms {
            acc.push(m).unwrap();
        }
        assert_eq!(acc.count(), 3);
        assert_eq!(acc.finish().unwrap(), mean_probability(&ms).unwrap());
        assert!(ProbabilityMean::<f32>::new().finish().is_err());
        let mut acc = ProbabilityMean::new();
        acc.push(&prob(&[0.1, 0.2])).unwrap();
        assert!(acc.push(&prob(&[0.1, 0.2, 0.3])).is_err());
    }

    #[test]
    fn ts_on_probabilities_is_refused() {
        let set =
            PredictionSet::new("x", MemberKind::Probability, vec![prob(&[0.2])], tags(1)).unwrap();
        assert!(aggregate_mean(&set, &TemperatureConfig::enabled(3.0)).is_err());
    }

    #[test]
    fn mixed_or_invalid_members_rejected() {
        let logits = VoxelGrid::new(
            Dims::new(1, 1, 1),
            Spacing::isotropic(1.0).unwrap(),
            2,
            vec![0.0f32, 1.0],
        )
        .unwrap();
        assert!(PredictionSet::new(
            "x",
            MemberKind::Probability,
            vec![prob(&[0.2]), logits],
            tags(2)
        )
        .is_err());
        assert!(PredictionSet::<f32>::new("x", MemberKind::Probability, vec![], vec![]).is_err());
        assert!(
            PredictionSet::new("x", MemberKind::Probability, vec![prob(&[1.2])], tags(1)).is_err()
        );
    }
}
