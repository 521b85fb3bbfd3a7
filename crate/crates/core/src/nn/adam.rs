use serde::{Deserialize, Serialize};

use super::Parameters;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments for a fixed parameter layout.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl AdamState {
    pub fn new(param_count: usize, config: AdamConfig) -> Self {
        AdamState {
            config,
            step: 0,
            first_moment: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
        }
    }

    pub fn for_params<P: Parameters + ?Sized>(params: &P, config: AdamConfig) -> Self {
        Self::new(params.param_count(), config)
    }

    pub fn step<P, G>(&mut self, params: &mut P, grads: &G) -> Result<()>
    where
        P: Parameters + ?Sized,
        G: Parameters + ?Sized,
    {
        let grad = grads.flatten();
        if grad.len() != self.first_moment.len() || params.param_count() != grad.len() {
            return Err(Error::dim(format!(
                "adam state holds {} moments, got {} params and {} grads",
                self.first_moment.len(),
                params.param_count(),
                grad.len()
            )));
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let bias1 = 1.0 - beta1.powi(self.step as i32);
        let bias2 = 1.0 - beta2.powi(self.step as i32);
        let (m, v) = (&mut self.first_moment, &mut self.second_moment);
        let mut offset = 0;
        params.visit_mut(&mut |slice| {
            for (k, p) in slice.iter_mut().enumerate() {
                let i = offset + k;
                let g = grad[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
            offset += slice.len();
        });
        Ok(())
    }
}
