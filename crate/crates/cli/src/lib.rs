//! Command-line pipeline, overlay renderer and review service for
//! budget-aware uncertainty QA. The numerics live in `budgetqa-core`.

pub mod bundle;
pub mod config;
pub mod manifest;
pub mod pipeline;
pub mod render;
pub mod report;
pub mod service;
pub mod synthgen;

pub use bundle::{Bundle, BundleIndex, CurveRecord};
pub use config::{MethodConfig, RunConfig};
pub use manifest::{CaseEntry, Manifest};
pub use pipeline::{aggregate_members, run_pipeline, RunOutcome};
pub use render::{render_overlay, Axis, Colormap, Layers, OverlayVolumes, RenderRequest};
pub use report::{MetricColumn, MetricsRecord, StatsReport};
pub use synthgen::{synthesize, SynthOptions};
