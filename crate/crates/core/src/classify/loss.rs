//! Loss functions for the baseline classifier.
//!
//! Three regimes:
//! - cross entropy, the plain balanced-data baseline;
//! - mean false error, the sum of per-class mean errors (false positive
//!   error over negatives plus false negative error over positives), whose
//!   per-class normalization is what makes it cost sensitive on imbalanced
//!   batches;
//! - focal loss, `-(1 - s_t)^gamma * ln(s_t)`, which down-weights easy
//!   examples.
//!
//! Mean false error comes in two variants behind a flag: squared per-class
//! error (default) and an entropic per-class error.

use serde::{Deserialize, Serialize};

use super::{BaselineModel, ClassifyError, TrainSample, PROB_EPS};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MfeVariant {
    /// Per-class mean squared error.
    #[default]
    Squared,
    /// Per-class mean cross entropy.
    Entropic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LossKind {
    CrossEntropy,
    MeanFalseError { variant: MfeVariant },
    Focal { gamma: f64 },
}

impl LossKind {
    pub fn mfe() -> Self {
        LossKind::MeanFalseError {
            variant: MfeVariant::Squared,
        }
    }

    pub fn focal() -> Self {
        LossKind::Focal { gamma: 2.0 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::CrossEntropy => "ce",
            LossKind::MeanFalseError { .. } => "mfe",
            LossKind::Focal { .. } => "focal",
        }
    }

    pub fn validate(&self) -> Result<(), ClassifyError> {
        if let LossKind::Focal { gamma } = self {
            if !(gamma.is_finite() && *gamma >= 0.0) {
                return Err(ClassifyError::InvalidTrainConfig(format!(
                    "focal gamma {gamma} must be nonnegative"
                )));
            }
        }
        Ok(())
    }
}

fn clamp_prob(s: f64) -> f64 {
    s.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

fn check_batch(scores: &[f64], labels: &[bool]) -> Result<(), ClassifyError> {
    if scores.len() != labels.len() {
        return Err(ClassifyError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if scores.is_empty() {
        return Err(ClassifyError::EmptyBatch);
    }
    Ok(())
}

fn class_counts(labels: &[bool]) -> (usize, usize) {
    let pos = labels.iter().filter(|&&y| y).count();
    (pos, labels.len() - pos)
}

fn require_both_classes(labels: &[bool]) -> Result<(usize, usize), ClassifyError> {
    let (pos, neg) = class_counts(labels);
    if pos == 0 {
        return Err(ClassifyError::ClassAbsent("posit:no positive samples"));
    }
    if neg == 0 {
        return Err(ClassifyError::ClassAbsent("negative:no negative samples"));
    }
    Ok((pos, neg))
}

/// Scalar loss of a score/label batch. Scores are clamped to
/// `[PROB_EPS, 1 - PROB_EPS]` before any logarithm.
pub fn loss_value(scores: &[f64], labels: &[bool], kind: &LossKind) -> Result<f64, ClassifyError> {
    check_batch(scores, labels)?;
    kind.validate()?;
    match *kind {
        LossKind::CrossEntropy => {
            let sum: f64 = scores
                .iter()
                .zip(labels)
                .map(|(&s, &y)| {
                    let s = clamp_prob(s);
                    let s_t = if y { s } else { 1.0 - s };
                    -s_t.ln()
                })
                .sum();
            Ok(sum / scores.len() as f64)
        }
        LossKind::MeanFalseError { variant } => {
            let (pos, neg) = require_both_classes(labels)?;
            let mut fpe = 0.0; // over negatives
            let mut fne = 0.0; // over positives
            for (&s, &y) in scores.iter().zip(labels) {
                let s = clamp_prob(s);
                match variant {
                    MfeVariant::Squared => {
                        if y {
                            fne += (1.0 - s) * (1.0 - s);
                        } else {
                            fpe += s * s;
                        }
                    }
                    MfeVariant::Entropic => {
                        if y {
                            fne += -s.ln();
                        } else {
                            fpe += -(1.0 - s).ln();
                        }
                    }
                }
            }
            Ok(fpe / neg as f64 + fne / pos as f64)
        }
        LossKind::Focal { gamma } => {
            let sum: f64 = scores
                .iter()
                .zip(labels)
                .map(|(&s, &y)| {
                    let s = clamp_prob(s);
                    let s_t = if y { s } else { 1.0 - s };
                    -(1.0 - s_t).powf(gamma) * s_t.ln()
                })
                .sum();
            Ok(sum / scores.len() as f64)
        }
    }
}

/// d(loss)/d(score) for one sample given the batch class counts.
fn dloss_dscore(s: f64, y: bool, kind: &LossKind, total: usize, pos: usize, neg: usize) -> f64 {
    match *kind {
        LossKind::CrossEntropy => {
            let term = if y { -1.0 / s } else { 1.0 / (1.0 - s) };
            term / total as f64
        }
        LossKind::MeanFalseError { variant } => match variant {
            MfeVariant::Squared => {
                if y {
                    -2.0 * (1.0 - s) / pos as f64
                } else {
                    2.0 * s / neg as f64
                }
            }
            MfeVariant::Entropic => {
                if y {
                    -1.0 / (s * pos as f64)
                } else {
                    1.0 / ((1.0 - s) * neg as f64)
                }
            }
        },
        LossKind::Focal { gamma } => {
            let s_t = if y { s } else { 1.0 - s };
            let d_st = gamma * (1.0 - s_t).powf(gamma - 1.0) * s_t.ln()
                - (1.0 - s_t).powf(gamma) / s_t;
            let sign = if y { 1.0 } else { -1.0 };
            sign * d_st / total as f64
        }
    }
}

/// Analytic gradient of `loss_value` composed with the model score, with
/// respect to `(weights, bias)`.
///
/// Per-sample terms are accumulated over fixed-size chunks whose partials
/// combine in chunk order, so the result is bitwise identical across thread
/// counts and in the sequential build.
pub fn loss_gradient(
    model: &BaselineModel,
    batch: &[TrainSample],
    kind: &LossKind,
) -> Result<(Vec<f64>, f64), ClassifyError> {
    if batch.is_empty() {
        return Err(ClassifyError::EmptyBatch);
    }
    kind.validate()?;
    let labels: Vec<bool> = batch.iter().map(|s| s.label).collect();
    let (pos, neg) = match kind {
        LossKind::MeanFalseError { .. } => require_both_classes(&labels)?,
        _ => class_counts(&labels),
    };
    let total = batch.len();
    let dim = model.weights.len();
    for sample in batch {
        if sample.pixels.len() != dim {
            return Err(ClassifyError::DimensionMismatch {
                expected: dim,
                got: sample.pixels.len(),
            });
        }
    }

    const CHUNK: usize = 64;
    let chunks: Vec<&[TrainSample]> = batch.chunks(CHUNK).collect();
    let partials: Vec<Result<(Vec<f64>, f64), ClassifyError>> =
        par::map_slice(&chunks, |chunk| {
            let mut grad_w = vec![0.0; dim];
            let mut grad_b = 0.0;
            for sample in *chunk {
                let s = model.score_pixels(&sample.pixels)?;
                let dz = dloss_dscore(s, sample.label, kind, total, pos, neg) * s * (1.0 - s);
                for (g, &x) in grad_w.iter_mut().zip(&sample.pixels) {
                    *g += dz * model.normalize(x);
                }
                grad_b += dz;
            }
            Ok((grad_w, grad_b))
        });

    let mut grad_w = vec![0.0; dim];
    let mut grad_b = 0.0;
    for partial in partials {
        let (pw, pb) = partial?;
        for (g, p) in grad_w.iter_mut().zip(pw) {
            *g += p;
        }
        grad_b += pb;
    }
    Ok((grad_w, grad_b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn sample(pixels: Vec<f32>, label: bool) -> TrainSample {
        TrainSample { pixels, label }
    }

    #[test]
    fn cross_entropy_near_zero_for_perfect_predictions() {
        let scores = [1.0, 1.0, 0.0];
        let labels = [true, true, false];
        let loss = loss_value(&scores, &labels, &LossKind::CrossEntropy).unwrap();
        assert!(loss <= 1e-10, "{loss}");
    }

    #[test]
    fn focal_single_positive_half_score() {
        let loss = loss_value(&[0.5], &[true], &LossKind::focal()).unwrap();
        let expected = 0.25 * std::f64::consts::LN_2;
        assert!((loss - expected).abs() < 1e-12, "{loss} vs {expected}");
    }

    #[test]
    fn mfe_per_class_means() {
        // One positive s=0.8, one negative s=0.4:
        // FPE = 0.4^2, FNE = 0.2^2, total 0.20.
        let loss = loss_value(&[0.8, 0.4], &[true, false], &LossKind::mfe()).unwrap();
        assert!((loss - 0.20).abs() < 1e-12, "{loss}");
    }

    #[test]
    fn mfe_requires_both_classes() {
        let err = loss_value(&[0.5, 0.6], &[true, true], &LossKind::mfe()).unwrap_err();
        assert!(matches!(err, ClassifyError::ClassAbsent(_)));
    }

    #[test]
    fn losses_are_nonnegative() {
        let mut rng = crate::seeding::rng(5);
        for _ in 0..200 {
            let n = rng.random_range(2..20);
            let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=1.0)).collect();
            let mut labels: Vec<bool> = (0..n).map(|_| rng.random_range(0..2) == 1).collect();
            labels[0] = true;
            labels[1] = false;
            for kind in [LossKind::CrossEntropy, LossKind::mfe(), LossKind::focal()] {
                let loss = loss_value(&scores, &labels, &kind).unwrap();
                assert!(loss >= 0.0, "{kind:?} gave {loss}");
            }
        }
    }

    #[test]
    fn focal_gamma_zero_equals_cross_entropy() {
        let mut rng = crate::seeding::rng(9);
        for _ in 0..100 {
            let n = rng.random_range(1..16);
            let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=1.0)).collect();
            let labels: Vec<bool> = (0..n).map(|_| rng.random_range(0..2) == 1).collect();
            let ce = loss_value(&scores, &labels, &LossKind::CrossEntropy).unwrap();
            let focal0 = loss_value(&scores, &labels, &LossKind::Focal { gamma: 0.0 }).unwrap();
            assert_eq!(ce, focal0);
        }
    }

    #[test]
    fn length_mismatch_and_empty_rejected() {
        assert!(matches!(
            loss_value(&[0.5], &[true, false], &LossKind::CrossEntropy),
            Err(ClassifyError::LengthMismatch { .. })
        ));
        assert!(matches!(
            loss_value(&[], &[], &LossKind::CrossEntropy),
            Err(ClassifyError::EmptyBatch)
        ));
    }

    fn random_model(rng: &mut rand_chacha::ChaCha8Rng, patch_size: usize) -> BaselineModel {
        let mut model = BaselineModel::zeros(patch_size, 0.45, 0.25);
        model.weights = (0..patch_size * patch_size)
            .map(|_| rng.random_range(-0.8..0.8))
            .collect();
        model.bias = rng.random_range(-0.5..0.5);
        model
    }

    fn random_batch(
        rng: &mut rand_chacha::ChaCha8Rng,
        patch_size: usize,
        n: usize,
    ) -> Vec<TrainSample> {
        (0..n)
            .map(|i| {
                let pixels: Vec<f32> = (0..patch_size * patch_size)
                    .map(|_| rng.random_range(0.0f32..=1.0))
                    .collect();
                // Guarantee both classes.
                sample(pixels, i % 2 == 0)
            })
            .collect()
    }

    /// Central-difference oracle for the full parameter vector.
    fn numeric_gradient(
        model: &BaselineModel,
        batch: &[TrainSample],
        kind: &LossKind,
        h: f64,
    ) -> (Vec<f64>, f64) {
        let labels: Vec<bool> = batch.iter().map(|s| s.label).collect();
        let eval = |m: &BaselineModel| {
            let scores: Vec<f64> = batch
                .iter()
                .map(|s| m.score_pixels(&s.pixels).unwrap())
                .collect();
            loss_value(&scores, &labels, kind).unwrap()
        };
        let mut grad_w = vec![0.0; model.weights.len()];
        for (i, g) in grad_w.iter_mut().enumerate() {
            let mut plus = model.clone();
            plus.weights[i] += h;
            let mut minus = model.clone();
            minus.weights[i] -= h;
            *g = (eval(&plus) - eval(&minus)) / (2.0 * h);
        }
        let mut plus = model.clone();
        plus.bias += h;
        let mut minus = model.clone();
        minus.bias -= h;
        let grad_b = (eval(&plus) - eval(&minus)) / (2.0 * h);
        (grad_w, grad_b)
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = crate::seeding::rng(2024);
        for kind in [LossKind::CrossEntropy, LossKind::mfe(), LossKind::focal()] {
            let mut worst = 0.0f64;
            for _ in 0..20 {
                let model = random_model(&mut rng, 3);
                let batch = random_batch(&mut rng, 3, 8);
                let (gw, gb) = loss_gradient(&model, &batch, &kind).unwrap();
                let (nw, nb) = numeric_gradient(&model, &batch, &kind, 1e-5);
                for (a, b) in gw.iter().zip(&nw) {
                    worst = worst.max(rel_err(*a, *b));
                }
                worst = worst.max(rel_err(gb, nb));
            }
            assert!(worst <= 1e-4, "{kind:?} worst rel err {worst}");
        }
    }

    #[test]
    fn gradient_zero_at_symmetric_critical_point() {
        // Two samples with identical pixels and opposite labels under a zero
        // model: the pulls cancel exactly for cross entropy.
        let model = BaselineModel::zeros(2, 0.5, 0.5);
        let pixels = vec![0.25f32, 0.75, 0.5, 1.0];
        let batch = vec![sample(pixels.clone(), true), sample(pixels, false)];
        let (gw, gb) = loss_gradient(&model, &batch, &LossKind::CrossEntropy).unwrap();
        let norm: f64 = gw.iter().map(|g| g * g).sum::<f64>() + gb * gb;
        assert!(norm.sqrt() <= 1e-8, "{norm}");
    }

    #[test]
    fn duplicating_batch_leaves_mean_gradient_unchanged() {
        let mut rng = crate::seeding::rng(31);
        let model = random_model(&mut rng, 2);
        let batch = random_batch(&mut rng, 2, 6);
        let mut doubled = batch.clone();
        doubled.extend(batch.iter().cloned());
        for kind in [LossKind::CrossEntropy, LossKind::mfe(), LossKind::focal()] {
            let (gw, gb) = loss_gradient(&model, &batch, &kind).unwrap();
            let (dw, db) = loss_gradient(&model, &doubled, &kind).unwrap();
            for (a, b) in gw.iter().zip(&dw) {
                assert!((a - b).abs() < 1e-12, "{kind:?}");
            }
            assert!((gb - db).abs() < 1e-12);
        }
    }
}
