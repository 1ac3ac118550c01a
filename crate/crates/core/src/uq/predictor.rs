use std::path::PathBuf;

use super::aggregate::mean_probability;
use super::temperature::{temperature_softmax, TemperatureConfig};
use super::tta::{apply_transform, invert_transform_prob, TtaTransform};
use crate::error::{QaError, Result};
use crate::scalar::Scalar;
use crate::volgrid::{read_f32, Voxel, VoxelGrid};

/// A segmentation model: input volume in, 2-channel logits on the same grid out.
pub trait Predictor<F>: Send + Sync {
    fn predict(&self, input: &VoxelGrid<F>) -> Result<VoxelGrid<F>>;
}

/// Serves logits precomputed by an external model, stored as
/// `<root>/<case_id>/<tag>` containers.
#[derive(Debug, Clone)]
pub struct FilePredictor {
    root: PathBuf,
    case_id: String,
    tag: String,
}

impl FilePredictor {
    pub fn new(root: impl Into<PathBuf>, case_id: impl Into<String>, tag: impl Into<String>) -> Self {
        FilePredictor {
            root: root.into(),
            case_id: case_id.into(),
            tag: tag.into(),
        }
    }

    pub fn path(&self) -> PathBuf {
        self.root.join(&self.case_id).join(&self.tag)
    }
}

impl<F: Scalar + Voxel> Predictor<F> for FilePredictor {
    fn predict(&self, input: &VoxelGrid<F>) -> Result<VoxelGrid<F>> {
        let logits = read_f32(&self.path())?;
        logits.same_geometry(input)?;
        logits.expect_channels(2)?;
        Ok(logits.cast())
    }
}

/// Plain inference: predict then temperature softmax.
pub fn predict_probability<F: Scalar + Voxel>(
    predictor: &dyn Predictor<F>,
    input: &VoxelGrid<F>,
    temperature: &TemperatureConfig,
) -> Result<VoxelGrid<F>> {
    let logits = predictor.predict(input)?;
    temperature_softmax(&logits, temperature)
}

/// Test-time augmentation: for every transform, augment the input, predict,
/// temperature-scale, map the probabilities back, then average.
pub fn tta_predict<F: Scalar + Voxel>(
    predictor: &dyn Predictor<F>,
    input: &VoxelGrid<F>,
    transforms: &[TtaTransform],
    temperature: &TemperatureConfig,
) -> Result<VoxelGrid<F>> {
    if transforms.is_empty() {
        return Err(QaError::invalid("no TTA transforms"));
    }
    let maps = transforms
        .iter()
        .map(|t| {
            let augmented = apply_transform(input, t)?;
            let p = predict_probability(predictor, &augmented, temperature)?;
            invert_transform_prob(&p, t)
        })
        .collect::<Result<Vec<_>>>()?;
    mean_probability(&maps)
}
