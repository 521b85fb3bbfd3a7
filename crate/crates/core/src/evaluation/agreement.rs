use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean difference ± 1.96 sample standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementStats {
    pub mean_diff: f64,
    pub std_diff: f64,
    pub loa_low: f64,
    pub loa_high: f64,
    pub n: usize,
}

impl AgreementStats {
    /// Statistics of already-computed differences.
    pub fn from_diffs(diffs: &[f64]) -> Result<Self> {
        let n = diffs.len();
        if n < 2 {
            return Err(Error::invalid(format!(
                "limits of agreement need at least 2 pairs, got {n}"
            )));
        }
        let mean = diffs.iter().sum::<f64>() / n as f64;
        let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let std = var.sqrt();
        Ok(AgreementStats {
            mean_diff: mean,
            std_diff: std,
            loa_low: mean - 1.96 * std,
            loa_high: mean + 1.96 * std,
            n,
        })
    }
}

/// Agreement of per-subject counts; differences are `truth − pred`, so
/// over-counting gives a negative mean.
pub fn limits_of_agreement(pred: &[usize], truth: &[usize]) -> Result<AgreementStats> {
    if pred.len() != truth.len() {
        return Err(Error::dim(format!("{} predicted counts but {} true counts", pred.len(), truth.len())));
    }
    let diffs: Vec<f64> = truth.iter().zip(pred).map(|(&t, &p)| t as f64 - p as f64).collect();
    AgreementStats::from_diffs(&diffs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlandAltmanPoint {
    pub mean: f64,
    pub diff: f64,
}

/// Plot-ready `((t+p)/2, t−p)` pairs plus agreement over the differences.
pub fn bland_altman_points(truth: &[f64], pred: &[f64]) -> Result<(Vec<BlandAltmanPoint>, AgreementStats)> {
    if truth.len() != pred.len() {
        return Err(Error::dim(format!("{} truth values but {} predictions", truth.len(), pred.len())));
    }
    let points: Vec<BlandAltmanPoint> = truth
        .iter()
        .zip(pred)
        .map(|(t, p)| BlandAltmanPoint {
            mean: (t + p) / 2.0,
            diff: t - p,
        })
        .collect();
    let diffs: Vec<f64> = points.iter().map(|p| p.diff).collect();
    let stats = AgreementStats::from_diffs(&diffs)?;
    Ok((points, stats))
}
