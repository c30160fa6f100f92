//! Mini-batch SGD training for the baseline model.
//!
//! SGD with momentum 0.9, seeded per-epoch shuffling, and early selection:
//! the returned parameters are the ones with the best validation MCC, not
//! the final ones. Training itself never stops early.

use serde::{Deserialize, Serialize};

use super::{loss_gradient, loss_value, BaselineModel, ClassifyError, LossKind};
use crate::evalmetrics::{confusion, mcc};
use crate::par;

use rand::Rng;

/// One training example: flattened patch pixels and the positive/negative
/// label.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub pixels: Vec<f32>,
    pub label: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Whether the caller fed balanced training data; recorded for reports.
    pub balanced_input: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::CrossEntropy,
            learning_rate: 1e-4,
            batch_size: 128,
            epochs: 50,
            seed: 0,
            balanced_input: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ClassifyError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ClassifyError::InvalidTrainConfig(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(ClassifyError::InvalidTrainConfig(
                "epochs must be at least 1".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(ClassifyError::InvalidTrainConfig(
                "batch size must be at least 1".into(),
            ));
        }
        self.loss.validate()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// NaN when there is no validation data.
    pub val_mcc: f64,
    /// Batches skipped because mean false error saw a single class.
    pub skipped_batches: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were returned.
    pub best_epoch: usize,
    pub warnings: Vec<String>,
}

const MOMENTUM: f64 = 0.9;

fn scores_for(model: &BaselineModel, set: &[TrainSample]) -> Result<Vec<f64>, ClassifyError> {
    par::try_map_slice(set, |s| model.score_pixels(&s.pixels))
}

fn validation_mcc(model: &BaselineModel, val: &[TrainSample]) -> Result<f64, ClassifyError> {
    let scores = scores_for(model, val)?;
    let predicted: Vec<bool> = scores.iter().map(|&s| s >= 0.5).collect();
    let truth: Vec<bool> = val.iter().map(|s| s.label).collect();
    let counts = confusion(&predicted, &truth).expect("validation set is nonempty");
    Ok(mcc(&counts).expect("confusion total is positive"))
}

/// Train a logistic model, returning the parameters from the epoch with the
/// best validation MCC plus the per-epoch log.
///
/// Deterministic: identical data, config, and seed give bitwise-identical
/// parameters.
pub fn train(
    train_set: &[TrainSample],
    val_set: &[TrainSample],
    cfg: &TrainConfig,
    patch_size: usize,
) -> Result<(BaselineModel, TrainLog), ClassifyError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(ClassifyError::EmptyTrainSet);
    }
    let dim = patch_size * patch_size;
    for sample in train_set.iter().chain(val_set) {
        if sample.pixels.len() != dim {
            return Err(ClassifyError::DimensionMismatch {
                expected: dim,
                got: sample.pixels.len(),
            });
        }
    }
    if matches!(cfg.loss, LossKind::MeanFalseError { .. }) {
        let pos = train_set.iter().filter(|s| s.label).count();
        if pos == 0 || pos == train_set.len() {
            return Err(ClassifyError::ClassAbsent(
                "training set must contain both classes for mean false error",
            ));
        }
    }

    let mut warnings = Vec::new();

    // Scalar normalization constants over all training pixels.
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for s in train_set {
        for &x in &s.pixels {
            sum += f64::from(x);
        }
        count += s.pixels.len();
    }
    let mean = sum / count as f64;
    let mut var = 0.0f64;
    for s in train_set {
        for &x in &s.pixels {
            let d = f64::from(x) - mean;
            var += d * d;
        }
    }
    let mut std = (var / count as f64).sqrt();
    if std == 0.0 {
        warnings.push("constant training pixels; normalization std forced to 1".into());
        std = 1.0;
    }

    let mut model = BaselineModel::zeros(patch_size, mean, std);
    model.train_config = Some(cfg.clone());
    let mut velocity_w = vec![0.0f64; dim];
    let mut velocity_b = 0.0f64;

    let full_labels: Vec<bool> = train_set.iter().map(|s| s.label).collect();
    let mut rng = crate::seeding::rng(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut log = TrainLog {
        epochs: Vec::with_capacity(cfg.epochs),
        best_epoch: 0,
        warnings: Vec::new(),
    };
    let mut best: Option<(f64, Vec<f64>, f64, usize)> = None;

    for epoch in 1..=cfg.epochs {
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        let mut skipped_batches = 0usize;
        for batch_indices in order.chunks(cfg.batch_size) {
            let batch: Vec<TrainSample> = batch_indices
                .iter()
                .map(|&i| train_set[i].clone())
                .collect();
            if matches!(cfg.loss, LossKind::MeanFalseError { .. }) {
                let pos = batch.iter().filter(|s| s.label).count();
                if pos == 0 || pos == batch.len() {
                    skipped_batches += 1;
                    continue;
                }
            }
            let (grad_w, grad_b) = loss_gradient(&model, &batch, &cfg.loss)?;
            for ((w, v), g) in model.weights.iter_mut().zip(&mut velocity_w).zip(&grad_w) {
                *v = MOMENTUM * *v - cfg.learning_rate * g;
                *w += *v;
            }
            velocity_b = MOMENTUM * velocity_b - cfg.learning_rate * grad_b;
            model.bias += velocity_b;
        }

        let train_scores = scores_for(&model, train_set)?;
        let train_loss = loss_value(&train_scores, &full_labels, &cfg.loss)?;
        let val_mcc = if val_set.is_empty() {
            f64::NAN
        } else {
            validation_mcc(&model, val_set)?
        };
        log.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_mcc,
            skipped_batches,
        });
        if skipped_batches > 0 {
            log::debug!("epoch {epoch}: skipped {skipped_batches} single-class batches");
        }

        if !val_mcc.is_nan() {
            let better = match &best {
                None => true,
                Some((best_mcc, ..)) => val_mcc > *best_mcc,
            };
            if better {
                best = Some((val_mcc, model.weights.clone(), model.bias, epoch));
            }
        }
    }

    match best {
        Some((_, weights, bias, epoch)) => {
            model.weights = weights;
            model.bias = bias;
            log.best_epoch = epoch;
        }
        None => {
            warnings.push("no validation data; returning final-epoch parameters".into());
            log.best_epoch = cfg.epochs;
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    log.warnings = warnings;
    Ok((model, log))
}
