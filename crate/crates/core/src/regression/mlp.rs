use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState, Parameters};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpRegConfig {
    pub hidden: usize,
    pub max_iter: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for MlpRegConfig {
    fn default() -> Self {
        MlpRegConfig {
            hidden: 100,
            max_iter: 8000,
            lr: 1e-3,
            seed: 0,
        }
    }
}

/// One hidden ReLU layer and a linear output unit.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpNet {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array1<f64>,
    pub b2: Array1<f64>,
}

impl Parameters for MlpNet {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        for s in [self.w1.as_slice(), self.b1.as_slice(), self.w2.as_slice(), self.b2.as_slice()] {
            f(s.expect("standard layout"));
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        f(self.w1.as_slice_mut().expect("standard layout"));
        f(self.b1.as_slice_mut().expect("standard layout"));
        f(self.w2.as_slice_mut().expect("standard layout"));
        f(self.b2.as_slice_mut().expect("standard layout"));
    }
}

impl MlpNet {
    /// Glorot-uniform weights and biases.
    pub fn init(inputs: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b1 = (6.0 / (inputs + hidden) as f64).sqrt();
        let b2 = (6.0 / (hidden + 1) as f64).sqrt();
        MlpNet {
            w1: Array2::from_shape_fn((inputs, hidden), |_| rng.gen_range(-b1..b1)),
            b1: Array1::from_shape_fn(hidden, |_| rng.gen_range(-b1..b1)),
            w2: Array1::from_shape_fn(hidden, |_| rng.gen_range(-b2..b2)),
            b2: Array1::from_shape_fn(1, |_| rng.gen_range(-b2..b2)),
        }
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array1<f64> {
        let mut h = x.dot(&self.w1) + &self.b1;
        h.mapv_inplace(|v| v.max(0.0));
        h.dot(&self.w2) + self.b2[0]
    }

    /// Mean squared error and its exact gradient.
    pub fn loss_and_grad(&self, x: ArrayView2<f64>, y: &[f64]) -> (f64, MlpNet) {
        let n = x.nrows() as f64;
        let pre = x.dot(&self.w1) + &self.b1;
        let act = pre.mapv(|v| v.max(0.0));
        let out = act.dot(&self.w2) + self.b2[0];
        let resid: Array1<f64> = out.iter().zip(y).map(|(o, t)| o - t).collect();
        let loss = resid.iter().map(|r| r * r).sum::<f64>() / n;

        let g_out = resid * (2.0 / n);
        let g_w2 = act.t().dot(&g_out);
        let g_b2 = Array1::from_elem(1, g_out.sum());
        let mut g_pre = Array2::from_shape_fn(act.raw_dim(), |(i, j)| g_out[i] * self.w2[j]);
        g_pre.zip_mut_with(&pre, |g, &p| {
            if p <= 0.0 {
                *g = 0.0
            }
        });
        let g_w1 = x.t().dot(&g_pre);
        let g_b1 = g_pre.sum_axis(Axis(0));
        (
            loss,
            MlpNet {
                w1: g_w1,
                b1: g_b1,
                w2: g_w2,
                b2: g_b2,
            },
        )
    }
}

/// Network plus the standardization it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub net: MlpNet,
    pub x_mean: Vec<f64>,
    pub x_scale: Vec<f64>,
    pub y_mean: f64,
    pub y_scale: f64,
}

impl MlpModel {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let z = Array2::from_shape_fn((1, row.len()), |(_, j)| (row[j] - self.x_mean[j]) / self.x_scale[j]);
        self.net.forward(z.view())[0] * self.y_scale + self.y_mean
    }
}

fn column_stats(x: ArrayView2<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = x.nrows() as f64;
    x.columns()
        .into_iter()
        .map(|c| {
            let m = c.sum() / n;
            let sd = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
            (m, if sd > 1e-12 { sd } else { 1.0 })
        })
        .unzip()
}

/// Full-batch Adam on standardized inputs and targets.
pub fn fit_mlp_regressor(x: ArrayView2<f64>, y: &[f64], config: &MlpRegConfig) -> Result<MlpModel> {
    if config.max_iter == 0 || config.hidden == 0 {
        return Err(Error::invalid("mlp needs max_iter >= 1 and hidden >= 1"));
    }
    if x.nrows() == 0 || x.nrows() != y.len() {
        return Err(Error::dim(format!("{} feature rows but {} targets", x.nrows(), y.len())));
    }
    let (x_mean, x_scale) = column_stats(x);
    let mut z = x.to_owned();
    for (j, mut col) in z.columns_mut().into_iter().enumerate() {
        col.mapv_inplace(|v| (v - x_mean[j]) / x_scale[j]);
    }
    let n = y.len() as f64;
    let y_mean = y.iter().sum::<f64>() / n;
    let y_sd = (y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n).sqrt();
    let y_scale = if y_sd > 1e-12 { y_sd } else { 1.0 };
    let yz: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_scale).collect();

    let mut net = MlpNet::init(x.ncols(), config.hidden, config.seed);
    let mut adam = AdamState::for_params(
        &net,
        AdamConfig {
            lr: config.lr,
            ..Default::default()
        },
    );
    for _ in 0..config.max_iter {
        let (_, grad) = net.loss_and_grad(z.view(), &yz);
        adam.step(&mut net, &grad)?;
    }
    Ok(MlpModel {
        net,
        x_mean,
        x_scale,
        y_mean,
        y_scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_linear_gradient() {
        // with a single active hidden unit of unit weight, the output is a
        // linear layer; its weight gradient is Xᵀ(Xw - y)·2/n
        let x = ndarray::array![[1.0, 2.0], [0.5, -1.0], [2.0, 0.3]];
        let y = [1.0, -0.5, 2.0];
        let net = MlpNet {
            w1: ndarray::array![[0.4], [0.2]],
            b1: ndarray::array![5.0],
            w2: ndarray::array![1.0],
            b2: ndarray::array![0.0],
        };
        let (_, g) = net.loss_and_grad(x.view(), &y);
        let pred = x.dot(&ndarray::array![0.4, 0.2]) + 5.0;
        let resid: Array1<f64> = pred.iter().zip(&y).map(|(p, t)| p - t).collect();
        let expected = x.t().dot(&resid) * (2.0 / 3.0);
        for (a, b) in g.w1.column(0).iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn null_target_predicts_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Array2::from_shape_fn((60, 4), |_| rng.gen_range(-1.0..1.0));
        let m = fit_mlp_regressor(x.view(), &[0.0; 60], &MlpRegConfig { max_iter: 500, ..Default::default() }).unwrap();
        for r in x.rows() {
            assert!(m.predict(r.as_slice().unwrap()).abs() < 0.05);
        }
    }

    #[test]
    fn rejects_mismatch() {
        let x = Array2::<f64>::zeros((3, 2));
        assert!(fit_mlp_regressor(x.view(), &[1.0, 2.0], &MlpRegConfig::default()).is_err());
    }
}
