use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::Tensor2;
use crate::error::{Error, Result};

/// Probabilities are clamped to this floor before any logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// Weighting of the smoothing term and its truncation threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub lambda_tmse: f64,
    pub tau: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda_tmse: 0.15,
            tau: 4.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_tmse >= 0.0) || !(self.tau > 0.0) {
            return Err(Error::invalid(format!(
                "loss config needs lambda_tmse >= 0 and tau > 0, got {self:?}"
            )));
        }
        Ok(())
    }
}

pub fn log_probs(probs: &Tensor2) -> Tensor2 {
    probs.mapv(|p| p.max(PROB_FLOOR).ln())
}

/// Mean negative log-likelihood of `labels` under the per-row distributions.
pub fn cross_entropy_loss(probs: &Tensor2, labels: &[usize]) -> Result<f64> {
    check_labels(probs, labels)?;
    if labels.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(t, &y)| -probs[[t, y]].max(PROB_FLOOR).ln())
        .sum();
    Ok(total / labels.len() as f64)
}

fn check_labels(probs: &Tensor2, labels: &[usize]) -> Result<()> {
    if probs.nrows() != labels.len() {
        return Err(Error::dim(format!(
            "{} probability rows but {} labels",
            probs.nrows(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= probs.ncols()) {
        return Err(Error::invalid(format!(
            "label {bad} out of range for {} classes",
            probs.ncols()
        )));
    }
    Ok(())
}

/// Truncated squared difference of adjacent log-probabilities, averaged over
/// `(T-1)·J` entries. Zero for fewer than two rows.
pub fn tmse_loss(probs: &Tensor2, config: &LossConfig) -> f64 {
    let (len, classes) = probs.dim();
    if len < 2 || classes == 0 {
        return 0.0;
    }
    let lp = log_probs(probs);
    let mut total = 0.0;
    for t in 1..len {
        for c in 0..classes {
            let d = (lp[[t, c]] - lp[[t - 1, c]]).abs().min(config.tau);
            total += d * d;
        }
    }
    total / ((len - 1) * classes) as f64
}

/// Gradient of [`cross_entropy_loss`] with respect to the clamped log-probabilities.
pub fn cross_entropy_grad_logp(probs: &Tensor2, labels: &[usize]) -> Result<Tensor2> {
    check_labels(probs, labels)?;
    let mut g = Array2::zeros(probs.raw_dim());
    let scale = 1.0 / labels.len().max(1) as f64;
    for (t, &y) in labels.iter().enumerate() {
        g[[t, y]] = -scale;
    }
    Ok(g)
}

/// Gradient of [`tmse_loss`] with respect to the clamped log-probabilities.
pub fn tmse_grad_logp(probs: &Tensor2, config: &LossConfig) -> Tensor2 {
    let (len, classes) = probs.dim();
    let mut g = Array2::zeros(probs.raw_dim());
    if len < 2 || classes == 0 {
        return g;
    }
    let lp = log_probs(probs);
    let norm = 2.0 / ((len - 1) * classes) as f64;
    for t in 1..len {
        for c in 0..classes {
            let d = lp[[t, c]] - lp[[t - 1, c]];
            if d.abs() < config.tau {
                g[[t, c]] += norm * d;
                g[[t - 1, c]] -= norm * d;
            }
        }
    }
    g
}

/// Maps a gradient w.r.t. `ln max(p, floor)` to the softmax logits.
/// Entries whose probability sits below the floor contribute nothing.
pub fn logp_grad_to_logits(probs: &Tensor2, grad_logp: &Tensor2) -> Tensor2 {
    let mut g = grad_logp.clone();
    g.zip_mut_with(probs, |gv, &p| {
        if p < PROB_FLOOR {
            *gv = 0.0
        }
    });
    for (mut grow, prow) in g.rows_mut().into_iter().zip(probs.rows()) {
        let sum = grow.sum();
        grow.zip_mut_with(&prow, |gv, &p| *gv -= p * sum);
    }
    g
}

/// Maps a gradient w.r.t. softmax probabilities back to its logits.
pub fn softmax_backward(probs: &Tensor2, grad_probs: &Tensor2) -> Tensor2 {
    let mut g = grad_probs.clone();
    for (mut grow, prow) in g.rows_mut().into_iter().zip(probs.rows()) {
        let dot = grow.dot(&prow);
        grow.zip_mut_with(&prow, |gv, &p| *gv = p * (*gv - dot));
    }
    g
}
