//! Probability calibration, aggregation and uncertainty maps.

mod aggregate;
mod entropy;
mod predictor;
mod schedule;
mod temperature;
mod tta;

pub use aggregate::{aggregate_mean, mean_probability, MemberKind, PredictionSet, ProbabilityMean};
pub use entropy::{binary_entropy, entropy_map, ENTROPY_EPS};
pub use predictor::{predict_probability, tta_predict, FilePredictor, Predictor};
pub use schedule::{checkpoint_epochs, inference_checkpoints, lr_schedule, CyclicalLrConfig};
pub use temperature::{foreground_probability, temperature_softmax, TemperatureConfig};
pub use tta::{
    apply_transform, invert_transform_prob, sample_tta_transforms, TtaTransform, ROTATION_RANGE_DEG,
    SCALE_RANGE, TRANSLATION_RANGE_VOX,
};
