//! Handcrafted per-channel features for jump height regression.
//!
//! Every ROI window yields 24 features per channel (16 time-domain, 8
//! frequency-domain) plus one ordinal jump-type value: 145 values for a
//! 6-channel IMU. The catalog is versioned; regressors record the version
//! they were fitted on and refuse vectors from another catalog.

mod spectrum;

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{CHANNELS, CHANNEL_NAMES, SAMPLE_RATE_HZ};
use crate::segmentation::{ClassVocabulary, Roi};

pub use spectrum::{normalized_entropy, power_spectrum, spectral_entropy, PowerSpectrum};

pub const CATALOG_VERSION: u32 = 1;

pub const FEATURES_PER_CHANNEL: usize = 24;

/// Length of a full feature vector: 24 per channel plus jump type.
pub const FEATURE_DIM: usize = FEATURES_PER_CHANNEL * CHANNELS + 1;

pub const FEATURE_NAMES: [&str; FEATURES_PER_CHANNEL] = [
    "max",
    "min",
    "mean",
    "median",
    "std",
    "variance",
    "rms",
    "peak_to_peak",
    "iqr",
    "skewness",
    "kurtosis",
    "mean_abs_diff",
    "zero_crossing_rate",
    "signal_energy",
    "autocorr_lag1",
    "linear_slope",
    "spectral_entropy",
    "spectral_centroid",
    "spectral_spread",
    "dominant_frequency",
    "dominant_magnitude",
    "spectral_rolloff_85",
    "band_power_0_5hz",
    "band_power_5_20hz",
];

/// Degree `d` such that scaling the signal by `a > 0` scales the feature by `a^d`.
pub const HOMOGENEITY_DEGREE: [u8; FEATURES_PER_CHANNEL] = [
    1, 1, 1, 1, 1, 2, 1, 1, 1, 0, 0, 1, 0, 2, 0, 1, // time domain
    0, 0, 0, 0, 2, 0, 2, 2, // frequency domain
];

/// Column names of a full feature vector, in value order.
pub fn feature_names() -> Vec<String> {
    CHANNEL_NAMES
        .iter()
        .flat_map(|ch| FEATURE_NAMES.iter().map(move |f| format!("{ch}_{f}")))
        .chain(std::iter::once("jump_type".to_string()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub names: Vec<String>,
    pub catalog_version: u32,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// The 24 catalog features of one channel window, in catalog order.
pub fn extract_channel_features(signal: &[f64], fs: f64) -> Result<[f64; FEATURES_PER_CHANNEL]> {
    let n = signal.len();
    if n < 4 {
        return Err(Error::invalid(format!(
            "feature extraction needs at least 4 samples, got {n}"
        )));
    }
    let nf = n as f64;
    let mut sorted = signal.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let max = sorted[n - 1];
    let min = sorted[0];
    let mean = signal.iter().sum::<f64>() / nf;
    let median = quantile(&sorted, 0.5);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);

    let dev: Vec<f64> = signal.iter().map(|x| x - mean).collect();
    let m2 = dev.iter().map(|d| d * d).sum::<f64>() / nf;
    let variance = m2 * nf / (nf - 1.0);
    let std = variance.sqrt();
    let energy: f64 = signal.iter().map(|x| x * x).sum();
    let rms = (energy / nf).sqrt();

    // Rounding leaves a tiny spread on constant signals; treat anything at
    // the noise floor of the largest magnitude as zero variance.
    let scale = max.abs().max(min.abs());
    let degenerate = m2.sqrt() <= 1e-12 * scale || m2 == 0.0;

    let (skewness, kurtosis, autocorr) = if degenerate {
        (0.0, 0.0, 0.0)
    } else {
        let m3 = dev.iter().map(|d| d.powi(3)).sum::<f64>() / nf;
        let m4 = dev.iter().map(|d| d.powi(4)).sum::<f64>() / nf;
        let lag: f64 = dev.windows(2).map(|w| w[0] * w[1]).sum();
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0, lag / (m2 * nf))
    };

    let mean_abs_diff = signal.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (nf - 1.0);
    let zero_crossing_rate = if degenerate {
        0.0
    } else {
        dev.windows(2).filter(|w| w[0] * w[1] < 0.0).count() as f64 / (nf - 1.0)
    };
    let t_mean = (nf - 1.0) / 2.0;
    let sxx: f64 = (0..n).map(|t| (t as f64 - t_mean).powi(2)).sum();
    let linear_slope = (0..n).map(|t| (t as f64 - t_mean) * dev[t]).sum::<f64>() / sxx;

    let spectral = if degenerate {
        [0.0; 8]
    } else {
        spectral_features(&power_spectrum(signal, fs)?)
    };

    let mut out = [0.0; FEATURES_PER_CHANNEL];
    out[..16].copy_from_slice(&[
        max,
        min,
        mean,
        median,
        std,
        variance,
        rms,
        max - min,
        iqr,
        skewness,
        kurtosis,
        mean_abs_diff,
        zero_crossing_rate,
        energy,
        autocorr,
        linear_slope,
    ]);
    out[16..].copy_from_slice(&spectral);
    Ok(out)
}

fn spectral_features(spec: &PowerSpectrum) -> [f64; 8] {
    let total = spec.total();
    if !(total > 0.0) {
        return [0.0; 8];
    }
    let f = &spec.frequencies;
    let p = &spec.power;
    let entropy = normalized_entropy(p);
    let centroid = f.iter().zip(p).map(|(f, p)| f * p).sum::<f64>() / total;
    let spread = (f
        .iter()
        .zip(p)
        .map(|(f, p)| (f - centroid).powi(2) * p)
        .sum::<f64>()
        / total)
        .sqrt();
    let (dom_idx, dom_mag) = p
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
    let mut cumulative = 0.0;
    let mut rolloff = f[f.len() - 1];
    for (fk, pk) in f.iter().zip(p) {
        cumulative += pk;
        if cumulative >= 0.85 * total {
            rolloff = *fk;
            break;
        }
    }
    let band = |lo: f64, hi: f64| {
        f.iter()
            .zip(p)
            .filter(|(f, _)| **f >= lo && **f < hi)
            .map(|(_, p)| p)
            .sum::<f64>()
    };
    [
        entropy,
        centroid,
        spread,
        f[dom_idx],
        dom_mag,
        rolloff,
        band(0.0, 5.0),
        band(5.0, 20.0),
    ]
}

/// Copies the ROI out of a session, zero-filling the padded edges.
pub fn roi_window(samples: ArrayView2<f64>, roi: &Roi) -> Array2<f64> {
    let mut out = Array2::zeros((roi.width(), samples.ncols()));
    let n = roi.window_end - roi.window_start;
    out.slice_mut(s![roi.left_pad..roi.left_pad + n, ..])
        .assign(&samples.slice(s![roi.window_start..roi.window_end, ..]));
    out
}

/// Full 145-value vector for one ROI window of a height-eligible jump.
pub fn extract_feature_vector(
    window: ArrayView2<f64>,
    class_id: usize,
    vocab: &ClassVocabulary,
) -> Result<FeatureVector> {
    if window.ncols() != CHANNELS {
        return Err(Error::dim(format!(
            "feature window needs {CHANNELS} channels, got {}",
            window.ncols()
        )));
    }
    let ordinal = vocab.eligible_ordinal(class_id).ok_or_else(|| {
        Error::invalid(format!(
            "class {} is not height-eligible",
            vocab.name(class_id).unwrap_or("<out of range>")
        ))
    })?;
    let mut values = Vec::with_capacity(FEATURE_DIM);
    for col in window.columns() {
        let signal = col.to_vec();
        values.extend_from_slice(&extract_channel_features(&signal, SAMPLE_RATE_HZ)?);
    }
    values.push(ordinal as f64);
    Ok(FeatureVector {
        values,
        names: feature_names(),
        catalog_version: CATALOG_VERSION,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn feat(sig: &[f64], name: &str) -> f64 {
        let f = extract_channel_features(sig, 100.0).unwrap();
        f[FEATURE_NAMES.iter().position(|n| *n == name).unwrap()]
    }

    #[test]
    fn catalog_shape() {
        assert_eq!(FEATURE_NAMES.len(), 24);
        for required in ["max", "std", "spectral_entropy"] {
            assert!(FEATURE_NAMES.contains(&required));
        }
        assert_eq!(FEATURE_DIM, 145);
        let names = feature_names();
        assert_eq!(names.len(), 145);
        assert_eq!(names[0], "ax_max");
        assert_eq!(names[24], "ay_max");
        assert_eq!(names[144], "jump_type");
    }

    #[test]
    fn zero_window() {
        let f = extract_channel_features(&[0.0; 300], 100.0).unwrap();
        assert!(f.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ramp_hand_values() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(feat(&x, "max"), 4.0);
        assert_eq!(feat(&x, "min"), 1.0);
        assert_eq!(feat(&x, "mean"), 2.5);
        assert_eq!(feat(&x, "peak_to_peak"), 3.0);
        assert_eq!(feat(&x, "mean_abs_diff"), 1.0);
        assert!((feat(&x, "linear_slope") - 1.0).abs() < 1e-12);
    }

    /// Straightforward reimplementation of the remaining ramp features.
    #[test]
    fn ramp_reference_values() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(feat(&x, "median"), 2.5);
        // ddof = 1: Σ(x-2.5)² = 5, /3
        assert!((feat(&x, "variance") - 5.0 / 3.0).abs() < 1e-12);
        assert!((feat(&x, "std") - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((feat(&x, "rms") - 7.5f64.sqrt()).abs() < 1e-12);
        // numpy-style linear quantiles: q25 = 1.75, q75 = 3.25
        assert!((feat(&x, "iqr") - 1.5).abs() < 1e-12);
        assert!(feat(&x, "skewness").abs() < 1e-12);
        // population m4/m2² - 3 = (2·(1.5⁴+0.5⁴)/4) / 1.25² - 3 = 2.5625/1.5625 - 3
        assert!((feat(&x, "kurtosis") - (2.5625 / 1.5625 - 3.0)).abs() < 1e-12);
        assert_eq!(feat(&x, "signal_energy"), 30.0);
        // one sign change of (-1.5, -0.5, 0.5, 1.5) over 3 gaps
        assert!((feat(&x, "zero_crossing_rate") - 1.0 / 3.0).abs() < 1e-12);
        // (-1.5·-0.5 + -0.5·0.5 + 0.5·1.5) / 5
        assert!((feat(&x, "autocorr_lag1") - 0.25).abs() < 1e-12);
    }

    #[test]
    fn constant_window_is_defined() {
        let x = [0.1; 64];
        let f = extract_channel_features(&x, 100.0).unwrap();
        assert!(f.iter().all(|v| v.is_finite()));
        assert_eq!(feat(&x, "skewness"), 0.0);
        assert_eq!(feat(&x, "kurtosis"), 0.0);
        assert_eq!(feat(&x, "autocorr_lag1"), 0.0);
        assert_eq!(feat(&x, "spectral_entropy"), 0.0);
    }

    #[test]
    fn scaling_by_two() {
        let x: Vec<f64> = (0..120).map(|t| ((t as f64) * 0.37).sin() + 0.2 * ((t * t) % 7) as f64).collect();
        let x2: Vec<f64> = x.iter().map(|v| v * 2.0).collect();
        for name in ["max", "min", "mean", "std", "rms", "peak_to_peak"] {
            assert!((feat(&x2, name) - 2.0 * feat(&x, name)).abs() < 1e-12, "{name}");
        }
        for name in ["zero_crossing_rate", "spectral_entropy", "skewness", "kurtosis", "autocorr_lag1"] {
            assert!((feat(&x2, name) - feat(&x, name)).abs() < 1e-12, "{name}");
        }
    }

    #[test]
    fn short_window_rejected() {
        assert!(extract_channel_features(&[1.0, 2.0, 3.0], 100.0).is_err());
    }

    #[test]
    fn vector_contract() {
        let vocab = ClassVocabulary::default();
        let window = Array2::<f64>::zeros((300, 6));
        let fv = extract_feature_vector(window.view(), 1, &vocab).unwrap();
        assert_eq!(fv.values.len(), 145);
        assert!(fv.values[..144].iter().all(|&v| v == 0.0));
        assert_eq!(fv.values[144], 0.0);
        let os = extract_feature_vector(window.view(), 4, &vocab).unwrap();
        assert_eq!(os.values[144], 3.0);
        assert!(extract_feature_vector(window.view(), 5, &vocab).is_err());
        assert!(extract_feature_vector(Array2::<f64>::zeros((300, 5)).view(), 1, &vocab).is_err());
    }

    #[test]
    fn roi_window_pads_with_zeros() {
        let samples = Array2::from_shape_fn((50, 6), |(t, c)| (t * 10 + c) as f64 + 1.0);
        let roi = crate::segmentation::select_roi(&crate::segmentation::Segment::new(0, 4, 1), 50, 20);
        let w = roi_window(samples.view(), &roi);
        assert_eq!(w.dim(), (20, 6));
        assert!(w.row(0).iter().all(|&v| v == 0.0));
        assert_eq!(w.row(roi.left_pad), samples.row(0));
    }

    proptest! {
        #[test]
        fn finite_for_finite_inputs(sig in prop::collection::vec(-1e3f64..1e3, 4..80), spike in 0usize..80) {
            let mut s = sig.clone();
            let idx = spike % s.len();
            s[idx] += 1e4;
            for v in [sig, s] {
                let f = extract_channel_features(&v, 100.0).unwrap();
                prop_assert!(f.iter().all(|x| x.is_finite()));
                let h = f[16];
                prop_assert!((0.0..=1.0).contains(&h));
            }
        }
    }
}
