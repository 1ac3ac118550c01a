//! The full metric row for one (case, method) pair.

use serde::{Deserialize, Serialize};

use super::budget::{budget_curve, pointwise_report, BudgetCurve, BudgetGrid, PointwiseRow};
use super::budget::DEFAULT_POINT_BUDGETS;
use super::calibration::{brier, ece, DEFAULT_ECE_BINS};
use super::confusion::{confusion, Class};
use super::overlap::dsc;
use crate::error::{QaError, Result};
use crate::roi::{build_roi, RoiMask, DEFAULT_DELTA_MM};
use crate::scalar::Scalar;
use crate::uq::entropy_map;
use crate::volgrid::{binarize, Voxel, VoxelGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub roi_delta_mm: f64,
    pub ece_bins: usize,
    pub budgets: BudgetGrid,
    pub point_budgets: Vec<f64>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            roi_delta_mm: DEFAULT_DELTA_MM,
            ece_bins: DEFAULT_ECE_BINS,
            budgets: BudgetGrid::default(),
            point_budgets: DEFAULT_POINT_BUDGETS.to_vec(),
        }
    }
}

impl SuiteConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.roi_delta_mm.is_finite() && self.roi_delta_mm > 0.0) {
            return Err(QaError::invalid("roi_delta_mm must be positive"));
        }
        if self.ece_bins == 0 {
            return Err(QaError::invalid("ece_bins must be at least 1"));
        }
        self.budgets.points()?;
        for b in &self.point_budgets {
            if self.budgets.position(*b).is_none() {
                return Err(QaError::invalid(format!("point budget {b}% is not on the budget grid")));
            }
        }
        Ok(())
    }
}

/// Conditions under which a metric falls back to a convention.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegenerateFlags {
    pub empty_gt: bool,
    pub empty_pred: bool,
    /// No FP or FN voxels; UEO is 1 only for an empty flagged set.
    pub empty_errors: bool,
    /// Both masks empty: no ROI, ECE and BS reported as 0.
    pub empty_roi: bool,
    /// Classes with no voxels; their coverage is reported as 0.
    pub undefined_classes: Vec<Class>,
}

impl DegenerateFlags {
    /// Compact `;`-separated form, empty when nothing is degenerate.
    pub fn summary(&self) -> String {
        let mut parts: Vec<String> = Vec::new();
        if self.empty_gt {
            parts.push("empty_gt".into());
        }
        if self.empty_pred {
            parts.push("empty_pred".into());
        }
        if self.empty_errors {
            parts.push("empty_errors".into());
        }
        if self.empty_roi {
            parts.push("empty_roi".into());
        }
        for c in &self.undefined_classes {
            parts.push(format!("no_{}", c.name()));
        }
        parts.join(";")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub dsc: f64,
    pub ece: f64,
    pub bs: f64,
    pub ueo_auc: f64,
    pub fp_tp_auc: f64,
    pub fn_tn_auc: f64,
    pub points: Vec<PointwiseRow>,
    pub flags: DegenerateFlags,
}

pub struct CaseEvaluation<F> {
    pub row: MetricRow,
    pub curve: BudgetCurve,
    pub entropy: VoxelGrid<F>,
    pub prediction: VoxelGrid<u8>,
    pub roi: Option<RoiMask>,
}

/// Hard prediction at 0.5, entropy, ROI, calibration, overlap and the budget
/// curve of an aggregated probability map.
pub fn evaluate_case<F: Scalar + Voxel>(
    prob: &VoxelGrid<F>,
    gt: &VoxelGrid<u8>,
    cfg: &SuiteConfig,
    rng_seed: u64,
) -> Result<CaseEvaluation<F>> {
    cfg.validate()?;
    prob.expect_channels(1)?;
    prob.same_geometry(gt)?;
    gt.ensure_binary()?;
    let prediction = binarize(prob, F::of(0.5))?;
    let entropy = entropy_map(prob)?;
    let roi = match build_roi(&prediction, gt, cfg.roi_delta_mm) {
        Ok(r) => Some(r),
        Err(QaError::EmptyMasks) => None,
        Err(e) => return Err(e),
    };
    let (ece_v, bs_v) = match &roi {
        Some(r) => (ece(prob, gt, r, cfg.ece_bins)?, brier(prob, gt, r)?),
        None => (0.0, 0.0),
    };
    let conf = confusion(&prediction, gt)?;
    let curve = budget_curve(&entropy, &conf, &cfg.budgets, rng_seed)?;
    let points = pointwise_report(&curve, &cfg.point_budgets)?;
    let flags = DegenerateFlags {
        empty_gt: conf.count(Class::Tp) + conf.count(Class::Fn) == 0,
        empty_pred: conf.count(Class::Tp) + conf.count(Class::Fp) == 0,
        empty_errors: conf.error_count() == 0,
        empty_roi: roi.is_none(),
        undefined_classes: curve.undefined_classes.clone(),
    };
    let row = MetricRow {
        dsc: dsc(&prediction, gt)?,
        ece: ece_v,
        bs: bs_v,
        ueo_auc: curve.auc_ueo,
        fp_tp_auc: curve.auc_fp_minus_tp,
        fn_tn_auc: curve.auc_fn_minus_tn,
        points,
        flags,
    };
    Ok(CaseEvaluation {
        row,
        curve,
        entropy,
        prediction,
        roi,
    })
}
