//! Contrastive and multiple-choice objectives with analytic gradients.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ObjectiveError {
    #[error("similarity matrix must be square, got {0}x{1}")]
    NonSquare(usize, usize),
    #[error("correct index {index} out of range for {options} options (row {row})")]
    IndexOutOfRange { row: usize, index: usize, options: usize },
    #[error("expected {expected} targets, got {found}")]
    TargetCount { expected: usize, found: usize },
    #[error("loss evaluated to a non-finite value")]
    NonFinite,
    #[error("invalid loss config: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Weight of the contrastive term; the MCQ term gets `1 - alpha`.
    pub alpha: f64,
    /// Similarities are divided by this before any softmax.
    pub temperature: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { alpha: 0.5, temperature: 0.07 }
    }
}

impl LossConfig {
    pub fn new(alpha: f64, temperature: f64) -> Result<Self, ObjectiveError> {
        let cfg = LossConfig { alpha, temperature };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ObjectiveError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(ObjectiveError::InvalidConfig("alpha must lie in [0, 1]"));
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(ObjectiveError::InvalidConfig("temperature must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub value: f64,
    /// Gradient of `value` with respect to the input matrix.
    pub grad: Matrix,
}

/// Cross-entropy of one row against `target`, with the softmax written into `probs`.
fn row_cross_entropy(logits: impl Iterator<Item = f64> + Clone, target: usize, probs: &mut Vec<f64>) -> f64 {
    let max = logits.clone().fold(f64::NEG_INFINITY, f64::max);
    probs.clear();
    probs.extend(logits.map(|z| libm::exp(z - max)));
    let sum: f64 = probs.iter().sum();
    let log_sum = libm::log(sum);
    let shifted_target = libm::log(probs[target]);
    probs.iter_mut().for_each(|p| *p /= sum);
    log_sum - shifted_target
}

/// Symmetric contrastive loss over an `N x N` image-caption similarity matrix
/// whose diagonal holds the matched pairs.
pub fn clip_loss(similarity: &Matrix, cfg: &LossConfig) -> Result<LossResult, ObjectiveError> {
    let (n, m) = similarity.shape();
    if n != m {
        return Err(ObjectiveError::NonSquare(n, m));
    }
    cfg.validate()?;
    let inv_t = 1.0 / cfg.temperature;
    let mut grad = Matrix::zeros(n, n);
    if n == 0 {
        return Ok(LossResult { value: 0.0, grad });
    }
    let scale = 0.5 / (n as f64);
    let mut probs = Vec::with_capacity(n);
    // Image->text and text->image totals are kept apart so that swapping the
    // roles (transposing S) yields a bit-identical value.
    let mut image_total = 0.0;
    let mut text_total = 0.0;

    for i in 0..n {
        image_total += row_cross_entropy(similarity.row(i).iter().map(|s| s * inv_t), i, &mut probs);
        for (k, p) in probs.iter().enumerate() {
            let target = if k == i { 1.0 } else { 0.0 };
            grad[(i, k)] += scale * inv_t * (p - target);
        }
    }
    for k in 0..n {
        text_total += row_cross_entropy((0..n).map(|j| similarity[(j, k)] * inv_t), k, &mut probs);
        for (j, p) in probs.iter().enumerate() {
            let target = if j == k { 1.0 } else { 0.0 };
            grad[(j, k)] += scale * inv_t * (p - target);
        }
    }
    let value = (image_total + text_total) * scale;
    if !value.is_finite() {
        return Err(ObjectiveError::NonFinite);
    }
    Ok(LossResult { value, grad })
}

/// Mean cross-entropy of each row of already temperature-scaled `logits`
/// against its correct option index.
pub fn mcq_loss(logits: &Matrix, correct: &[usize]) -> Result<LossResult, ObjectiveError> {
    let (rows, options) = logits.shape();
    if correct.len() != rows {
        return Err(ObjectiveError::TargetCount { expected: rows, found: correct.len() });
    }
    if let Some((row, &index)) = correct.iter().enumerate().find(|(_, &c)| c >= options) {
        return Err(ObjectiveError::IndexOutOfRange { row, index, options });
    }
    let mut grad = Matrix::zeros(rows, options);
    if rows == 0 {
        return Ok(LossResult { value: 0.0, grad });
    }
    let inv_m = 1.0 / rows as f64;
    let mut probs = Vec::with_capacity(options);
    let mut total = 0.0;
    for (i, &c) in correct.iter().enumerate() {
        total += row_cross_entropy(logits.row(i).iter().copied(), c, &mut probs);
        for (j, p) in probs.iter().enumerate() {
            grad[(i, j)] = inv_m * (p - if j == c { 1.0 } else { 0.0 });
        }
    }
    let value = total * inv_m;
    if !value.is_finite() {
        return Err(ObjectiveError::NonFinite);
    }
    Ok(LossResult { value, grad })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CombinedLoss {
    pub value: f64,
    pub clip_grad: Matrix,
    pub mcq_grad: Matrix,
}

/// `alpha * clip + (1 - alpha) * mcq`, with each gradient scaled by its weight.
pub fn combined_loss(clip: &LossResult, mcq: &LossResult, cfg: &LossConfig) -> CombinedLoss {
    let a = cfg.alpha;
    CombinedLoss {
        value: a * clip.value + (1.0 - a) * mcq.value,
        clip_grad: clip.grad.scaled(a),
        mcq_grad: mcq.grad.scaled(1.0 - a),
    }
}

/// Max relative error between central differences of `f` and its analytic
/// gradient at `point`.
///
/// `f` returns `(value, gradient)`. Relative error per coordinate is
/// `|fd - analytic| / max(1e-8, |analytic|)`.
pub fn finite_difference_check<F>(f: F, point: &[f64], h: f64) -> Result<f64, ObjectiveError>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let (value, analytic) = f(point);
    if !value.is_finite() {
        return Err(ObjectiveError::NonFinite);
    }
    assert_eq!(analytic.len(), point.len(), "gradient length must match the point");
    let mut x = point.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let x0 = x[i];
        x[i] = x0 + h;
        let plus = f(&x).0;
        x[i] = x0 - h;
        let minus = f(&x).0;
        x[i] = x0;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(ObjectiveError::NonFinite);
        }
        let fd = (plus - minus) / (2.0 * h);
        let rel = libm::fabs(fd - analytic[i]) / libm::fmax(1e-8, libm::fabs(analytic[i]));
        worst = worst.max(rel);
    }
    Ok(worst)
}
