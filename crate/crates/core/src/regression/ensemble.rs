use ndarray::ArrayView2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{RegressionTree, TreeParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RfConfig {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub max_leaf_nodes: Option<usize>,
    pub bootstrap: bool,
    /// Features examined per split; `None` means ⌈p/3⌉.
    pub features_per_split: Option<usize>,
    pub seed: u64,
}

impl Default for RfConfig {
    fn default() -> Self {
        RfConfig {
            n_estimators: 50,
            max_depth: 10,
            max_leaf_nodes: Some(15),
            bootstrap: true,
            features_per_split: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    pub trees: Vec<RegressionTree>,
}

impl RandomForest {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Bagged squared-error trees with per-split feature subsampling. Each tree
/// draws its bootstrap sample (indices into the original row order) from its
/// own seed.
pub fn fit_rf(x: ArrayView2<f64>, y: &[f64], config: &RfConfig) -> Result<RandomForest> {
    if config.n_estimators == 0 || config.max_depth == 0 {
        return Err(Error::invalid("random forest needs n_estimators >= 1 and max_depth >= 1"));
    }
    let n = x.nrows();
    let p = x.ncols();
    let params = TreeParams {
        max_depth: config.max_depth,
        max_leaf_nodes: config.max_leaf_nodes,
        min_gain: 0.0,
        features_per_split: Some(config.features_per_split.unwrap_or(p.div_ceil(3))),
    };
    let mut master = ChaCha8Rng::seed_from_u64(config.seed);
    let seeds: Vec<u64> = (0..config.n_estimators).map(|_| master.gen()).collect();
    let trees = seeds
        .into_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let indices = if config.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n.max(1))).collect()
            } else {
                (0..n).collect()
            };
            RegressionTree::fit(x, y, indices, &params, &mut rng)
        })
        .collect::<Result<_>>()?;
    Ok(RandomForest { trees })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtConfig {
    pub eta: f64,
    pub n_estimators: usize,
    pub max_depth: usize,
    /// Minimum squared-error reduction for a split.
    pub gamma: f64,
    pub seed: u64,
}

impl Default for GbtConfig {
    fn default() -> Self {
        GbtConfig {
            eta: 0.1,
            n_estimators: 100,
            max_depth: 6,
            gamma: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientBoosting {
    pub base: f64,
    pub eta: f64,
    pub trees: Vec<RegressionTree>,
    /// Training MSE after 0, 1, …, M stages.
    pub train_mse: Vec<f64>,
}

impl GradientBoosting {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.trees
            .iter()
            .fold(self.base, |acc, t| acc + self.eta * t.predict(row))
    }
}

/// Stagewise squared-error boosting: each tree fits the current residuals
/// and is added with shrinkage `eta`.
pub fn fit_gbt(x: ArrayView2<f64>, y: &[f64], config: &GbtConfig) -> Result<GradientBoosting> {
    if !(config.eta > 0.0 && config.eta <= 1.0) || config.gamma < 0.0 || config.max_depth == 0 {
        return Err(Error::invalid(format!(
            "gbt needs 0 < eta <= 1, gamma >= 0, max_depth >= 1; got {config:?}"
        )));
    }
    let n = x.nrows();
    if n == 0 || n != y.len() {
        return Err(Error::dim(format!("{n} feature rows but {} targets", y.len())));
    }
    let base = y.iter().sum::<f64>() / n as f64;
    let mut fitted = vec![base; n];
    let mse = |f: &[f64]| f.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n as f64;
    let mut train_mse = vec![mse(&fitted)];
    let params = TreeParams {
        max_depth: config.max_depth,
        max_leaf_nodes: None,
        min_gain: config.gamma,
        features_per_split: None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut trees = Vec::with_capacity(config.n_estimators);
    for _ in 0..config.n_estimators {
        let residual: Vec<f64> = y.iter().zip(&fitted).map(|(t, f)| t - f).collect();
        let tree = RegressionTree::fit(x, &residual, (0..n).collect(), &params, &mut rng)?;
        for (i, f) in fitted.iter_mut().enumerate() {
            *f += config.eta * tree.predict(x.row(i).as_slice().expect("contiguous row"));
        }
        train_mse.push(mse(&fitted));
        trees.push(tree);
    }
    Ok(GradientBoosting {
        base,
        eta: config.eta,
        trees,
        train_mse,
    })
}
