//! Segmentation, calibration and budget-resolved uncertainty metrics.

mod budget;
mod calibration;
mod confusion;
mod overlap;
mod suite;

pub use budget::{
    budget_count, budget_curve, budget_curve_in, budget_threshold, coverage, EXPLICIT_DRAW_LIMIT, normalized_trapezoid, pointwise_report,
    select_budget, select_budget_in, BudgetCurve, BudgetGrid, BudgetSelection, Coverage,
    PointwiseRow, DEFAULT_POINT_BUDGETS, PLATEAU_REPETITIONS,
};
pub use calibration::{
    brier, confidence_bin, ece, fit_temperature, reliability_bins, BinStats, CalibrationCase,
    DEFAULT_ECE_BINS,
};
pub use confusion::{confusion, Class, ConfusionSets};
pub use overlap::{dice_from_counts, dsc, ueo_at_threshold};
pub use suite::{evaluate_case, CaseEvaluation, DegenerateFlags, MetricRow, SuiteConfig};
