//! Budget-aware uncertainty QA for voxel-wise segmentation.
//!
//! Predictions from one or many model instances are temperature-scaled,
//! averaged and turned into entropy maps; calibration is scored inside a
//! boundary band, and uncertainty is scored against segmentation errors under
//! review budgets (top-b% most uncertain voxels). Paired nonparametric tests
//! compare methods across patients.
//!
//! Voxel math is generic over [`Scalar`] (`f32`, `f64`); containers store
//! `f32` and `u8`.

pub mod error;
pub mod metrics;
pub mod rng;
pub mod roi;
pub mod scalar;
pub mod stats;
pub mod synth;
pub mod uq;
pub mod volgrid;

pub use error::{QaError, Result};
pub use scalar::Scalar;
pub use volgrid::{
    binarize, read_volume, write_volume, AnyGrid, CaseRecord, Dims, Spacing, VoxelGrid,
};

/// Single-precision probability, logit or uncertainty grid (the stored form).
pub type ProbGrid = VoxelGrid<f32>;
/// Double-precision grid for reference computations.
pub type ProbGrid64 = VoxelGrid<f64>;
/// Binary mask.
pub type MaskGrid = VoxelGrid<u8>;
/// Prediction set over stored single-precision members.
pub type PredictionSet32 = uq::PredictionSet<f32>;
pub type PredictionSet64 = uq::PredictionSet<f64>;
