use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// One-sided power spectrum of the mean-removed signal.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrum {
    pub frequencies: Vec<f64>,
    /// Scaled so that the bins sum to `Σ (x - x̄)²`.
    pub power: Vec<f64>,
}

impl PowerSpectrum {
    pub fn total(&self) -> f64 {
        self.power.iter().sum()
    }
}

pub fn power_spectrum(signal: &[f64], fs: f64) -> Result<PowerSpectrum> {
    let n = signal.len();
    if n < 2 {
        return Err(Error::invalid(format!(
            "power spectrum needs at least 2 samples, got {n}"
        )));
    }
    let mean = signal.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = signal.iter().map(|&x| Complex::new(x - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    let bins = n / 2 + 1;
    let power = (0..bins)
        .map(|k| {
            let p = buf[k].norm_sqr() / n as f64;
            let mirrored = k != 0 && !(n.is_multiple_of(2) && k == n / 2);
            if mirrored {
                2.0 * p
            } else {
                p
            }
        })
        .collect();
    let frequencies = (0..bins).map(|k| k as f64 * fs / n as f64).collect();
    Ok(PowerSpectrum { frequencies, power })
}

/// Shannon entropy of `power` normalized to a distribution, divided by
/// `ln(bins)`. A zero spectrum has entropy 0.
pub fn normalized_entropy(power: &[f64]) -> f64 {
    let total: f64 = power.iter().sum();
    if !(total > 0.0) || power.len() < 2 {
        return 0.0;
    }
    let h: f64 = power
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| {
            let q = p / total;
            -q * q.ln()
        })
        .sum();
    (h / (power.len() as f64).ln()).clamp(0.0, 1.0)
}

pub fn spectral_entropy(signal: &[f64], fs: f64) -> Result<f64> {
    Ok(normalized_entropy(&power_spectrum(signal, fs)?.power))
}
