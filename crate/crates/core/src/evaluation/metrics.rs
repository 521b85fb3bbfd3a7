use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segmentation::{ClassCounts, MatchResult};

fn check_pair(truth: &[f64], pred: &[f64], min: usize) -> Result<()> {
    if truth.len() != pred.len() {
        return Err(Error::dim(format!("{} truth values but {} predictions", truth.len(), pred.len())));
    }
    if truth.len() < min {
        return Err(Error::invalid(format!("need at least {min} values, got {}", truth.len())));
    }
    Ok(())
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// `1 − SS_res / SS_tot`, with `SS_tot` about the truth mean. Negative when
/// the prediction is worse than the mean.
pub fn r_squared(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check_pair(truth, pred, 2)?;
    let m = mean(truth);
    let ss_tot: f64 = truth.iter().map(|t| (t - m).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::invalid("R² is undefined for a constant truth series"));
    }
    let ss_res: f64 = truth.iter().zip(pred).map(|(t, p)| (t - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn rmse(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check_pair(truth, pred, 1)?;
    let mse = truth.iter().zip(pred).map(|(t, p)| (t - p).powi(2)).sum::<f64>() / truth.len() as f64;
    Ok(mse.sqrt())
}

/// Mean absolute percentage error as a fraction.
pub fn mape(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check_pair(truth, pred, 1)?;
    if let Some(i) = truth.iter().position(|&t| t == 0.0) {
        return Err(Error::invalid(format!("MAPE is undefined: truth value {i} is zero")));
    }
    Ok(truth.iter().zip(pred).map(|(t, p)| ((t - p) / t).abs()).sum::<f64>() / truth.len() as f64)
}

/// Sample correlation coefficient.
pub fn pearson_r(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check_pair(truth, pred, 2)?;
    let mt = mean(truth);
    let mp = mean(pred);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (t, p) in truth.iter().zip(pred) {
        sxy += (t - mt) * (p - mp);
        sxx += (t - mt).powi(2);
        syy += (p - mp).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::invalid("correlation is undefined for a constant series"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegMetrics {
    pub r2: f64,
    pub rmse: f64,
    pub mape: f64,
    pub pearson_r: f64,
    pub n: usize,
}

pub fn reg_metrics(truth: &[f64], pred: &[f64]) -> Result<RegMetrics> {
    Ok(RegMetrics {
        r2: r_squared(truth, pred)?,
        rmse: rmse(truth, pred)?,
        mape: mape(truth, pred)?,
        pearson_r: pearson_r(truth, pred)?,
        n: truth.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl From<ClassCounts> for ClassMetrics {
    fn from(c: ClassCounts) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(c.tp, c.tp + c.fp);
        let recall = ratio(c.tp, c.tp + c.fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassMetrics {
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegMetrics {
    pub iou_threshold: f64,
    /// Micro-averaged over all classes.
    pub overall: ClassMetrics,
    /// Keyed by class id.
    pub per_class: BTreeMap<usize, ClassMetrics>,
}

pub fn precision_recall_f1(result: &MatchResult) -> SegMetrics {
    SegMetrics {
        iou_threshold: result.threshold,
        overall: result.overall.into(),
        per_class: result.per_class.iter().map(|(&c, &k)| (c, k.into())).collect(),
    }
}
