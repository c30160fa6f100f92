//! Patch classification: a native logistic baseline over normalized patch
//! pixels, three loss functions with analytic gradients, mini-batch SGD
//! training, sliding-window inference with score-map stitching, and a
//! lookup-backed scorer for externally produced predictions.

mod ingest;
mod inference;
mod loss;
mod train;

pub use ingest::{ingest_predictions, write_predictions, PredictionTable};
pub use inference::{score_grid, sliding_inference, GridScore, ScoreMap};
pub use loss::{loss_gradient, loss_value, LossKind, MfeVariant};
pub use train::{train, EpochRecord, TrainConfig, TrainLog, TrainSample};

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("patch has {got} pixels, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("scores and labels have different lengths ({scores} vs {labels})")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("class absent: {0} under mean false error")]
    ClassAbsent(&'static str),
    #[error("invalid train config: {0}")]
    InvalidTrainConfig(String),
    #[error("empty training set")]
    EmptyTrainSet,
    #[error("image {width}x{height} smaller than patch size {patch}")]
    ImageSmallerThanPatch {
        width: usize,
        height: usize,
        patch: usize,
    },
    #[error("no prediction for tile '{tile_id}' origin ({row},{col})")]
    MissingPrediction { tile_id: String, row: u32, col: u32 },
    #[error("prediction file {path} line {line}: {detail}")]
    MalformedPrediction {
        path: String,
        line: usize,
        detail: String,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed model file: {0}")]
    MalformedModel(String),
}

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` so logs stay
/// finite.
pub const PROB_EPS: f64 = 1e-12;

/// A patch presented for scoring. Pixel-based scorers read `pixels`;
/// lookup-backed scorers read `tile_id` and `origin`.
#[derive(Debug, Clone, Copy)]
pub struct PatchView<'a> {
    pub tile_id: &'a str,
    pub origin: (u32, u32),
    pub pixels: &'a [f32],
}

/// Anything that maps a patch to a crack probability in `[0, 1]`.
///
/// Implementations must be deterministic for fixed parameters.
pub trait PatchScorer: Sync {
    fn score(&self, patch: &PatchView<'_>) -> Result<f64, ClassifyError>;
}

/// Logistic model over normalized flattened patch pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub patch_size: usize,
    /// Scalar normalization constants applied to every pixel.
    pub norm_mean: f64,
    pub norm_std: f64,
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Training configuration echo, when the model came from [`train`].
    pub train_config: Option<TrainConfig>,
}

impl BaselineModel {
    /// Zero-initialized model; scores 0.5 everywhere.
    pub fn zeros(patch_size: usize, norm_mean: f64, norm_std: f64) -> Self {
        assert!(norm_std > 0.0, "normalization std must be positive");
        Self {
            patch_size,
            norm_mean,
            norm_std,
            weights: vec![0.0; patch_size * patch_size],
            bias: 0.0,
            train_config: None,
        }
    }

    pub(crate) fn normalize(&self, pixel: f32) -> f64 {
        (f64::from(pixel) - self.norm_mean) / self.norm_std
    }

    /// `sigmoid(w . x_norm + b)`, clamped away from 0 and 1.
    pub fn score_pixels(&self, pixels: &[f32]) -> Result<f64, ClassifyError> {
        if pixels.len() != self.weights.len() {
            return Err(ClassifyError::DimensionMismatch {
                expected: self.weights.len(),
                got: pixels.len(),
            });
        }
        let mut z = self.bias;
        for (w, &x) in self.weights.iter().zip(pixels) {
            z += w * self.normalize(x);
        }
        Ok(sigmoid(z).clamp(PROB_EPS, 1.0 - PROB_EPS))
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<(), ClassifyError> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("model serializes");
        fs::write(path, text).map_err(|e| ClassifyError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self, ClassifyError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| ClassifyError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let model: BaselineModel =
            serde_json::from_str(&text).map_err(|e| ClassifyError::MalformedModel(e.to_string()))?;
        if model.weights.len() != model.patch_size * model.patch_size {
            return Err(ClassifyError::MalformedModel(format!(
                "weight length {} does not match patch size {}",
                model.weights.len(),
                model.patch_size
            )));
        }
        if !model.norm_std.is_finite() || model.norm_std <= 0.0 {
            return Err(ClassifyError::MalformedModel(format!(
                "normalization std {} must be positive",
                model.norm_std
            )));
        }
        Ok(model)
    }
}

impl PatchScorer for BaselineModel {
    fn score(&self, patch: &PatchView<'_>) -> Result<f64, ClassifyError> {
        self.score_pixels(patch.pixels)
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
