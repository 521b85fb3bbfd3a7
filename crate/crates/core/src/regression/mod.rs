//! Jump height regressors: random forest, gradient-boosted trees and a
//! one-hidden-layer MLP, plus permutation feature importance.

mod ensemble;
mod mlp;
mod tree;

use ndarray::{Array1, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::evaluation::r_squared;
use crate::features::{FeatureVector, CATALOG_VERSION};
use crate::io::{Checkpoint, Checkpointable};

pub use ensemble::{fit_gbt, fit_rf, GbtConfig, GradientBoosting, RandomForest, RfConfig};
pub use mlp::{fit_mlp_regressor, MlpModel, MlpNet, MlpRegConfig};
pub use tree::{best_split, fit_tree, Node, RegressionTree, Split, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressorKind {
    Rf,
    Gbt,
    Mlp,
}

impl std::str::FromStr for RegressorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rf" => Ok(RegressorKind::Rf),
            "gbt" | "xgb" => Ok(RegressorKind::Gbt),
            "mlp" => Ok(RegressorKind::Mlp),
            other => Err(Error::invalid(format!(
                "unknown regressor {other:?}; expected rf, gbt or mlp"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegressorConfig {
    Rf(RfConfig),
    Gbt(GbtConfig),
    Mlp(MlpRegConfig),
}

impl Default for RegressorConfig {
    fn default() -> Self {
        RegressorConfig::Rf(RfConfig::default())
    }
}

impl RegressorConfig {
    pub fn default_for(kind: RegressorKind) -> Self {
        match kind {
            RegressorKind::Rf => RegressorConfig::Rf(RfConfig::default()),
            RegressorKind::Gbt => RegressorConfig::Gbt(GbtConfig::default()),
            RegressorKind::Mlp => RegressorConfig::Mlp(MlpRegConfig::default()),
        }
    }

    pub fn kind(&self) -> RegressorKind {
        match self {
            RegressorConfig::Rf(_) => RegressorKind::Rf,
            RegressorConfig::Gbt(_) => RegressorKind::Gbt,
            RegressorConfig::Mlp(_) => RegressorKind::Mlp,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        match &mut self {
            RegressorConfig::Rf(c) => c.seed = seed,
            RegressorConfig::Gbt(c) => c.seed = seed,
            RegressorConfig::Mlp(c) => c.seed = seed,
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)] // one per loaded model; boxing buys nothing
pub enum RegressorModel {
    Rf(RandomForest),
    Gbt(GradientBoosting),
    Mlp(MlpModel),
}

/// A fitted height model bound to an input dimension and feature catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedRegressor {
    pub model: RegressorModel,
    pub config: RegressorConfig,
    pub catalog_version: u32,
    pub input_dim: usize,
}

pub fn fit_regressor(x: ArrayView2<f64>, y: &[f64], config: &RegressorConfig) -> Result<TrainedRegressor> {
    if x.nrows() == 0 {
        return Err(Error::invalid("regression needs at least one sample"));
    }
    if x.nrows() != y.len() {
        return Err(Error::dim(format!("{} feature rows but {} targets", x.nrows(), y.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("regression inputs must be finite"));
    }
    let x = x.as_standard_layout();
    let model = match config {
        RegressorConfig::Rf(c) => RegressorModel::Rf(fit_rf(x.view(), y, c)?),
        RegressorConfig::Gbt(c) => RegressorModel::Gbt(fit_gbt(x.view(), y, c)?),
        RegressorConfig::Mlp(c) => RegressorModel::Mlp(fit_mlp_regressor(x.view(), y, c)?),
    };
    Ok(TrainedRegressor {
        model,
        config: config.clone(),
        catalog_version: CATALOG_VERSION,
        input_dim: x.ncols(),
    })
}

impl TrainedRegressor {
    pub fn kind(&self) -> RegressorKind {
        self.config.kind()
    }

    pub fn predict_row(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.input_dim {
            return Err(Error::dim(format!(
                "regressor expects {} features, got {}",
                self.input_dim,
                row.len()
            )));
        }
        Ok(match &self.model {
            RegressorModel::Rf(m) => m.predict(row),
            RegressorModel::Gbt(m) => m.predict(row),
            RegressorModel::Mlp(m) => m.predict(row),
        })
    }

    pub fn predict_vector(&self, fv: &FeatureVector) -> Result<f64> {
        if fv.catalog_version != self.catalog_version {
            return Err(Error::invalid(format!(
                "feature catalog version {} does not match model version {}",
                fv.catalog_version, self.catalog_version
            )));
        }
        self.predict_row(&fv.values)
    }

    pub fn predict_matrix(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        x.rows()
            .into_iter()
            .map(|r| self.predict_row(&r.to_vec()))
            .collect()
    }
}

/// Drop in R² when a column is shuffled, averaged over `repeats` shuffles.
/// Sorted by importance (descending), ties by feature index.
pub fn permutation_importance(
    model: &TrainedRegressor,
    x: ArrayView2<f64>,
    y: &[f64],
    repeats: usize,
    seed: u64,
) -> Result<Vec<(usize, f64)>> {
    if repeats == 0 {
        return Err(Error::invalid("permutation importance needs repeats >= 1"));
    }
    let baseline = r_squared(y, &model.predict_matrix(x)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut work = x.to_owned();
    let mut out = Vec::with_capacity(x.ncols());
    for j in 0..x.ncols() {
        let original = x.column(j).to_owned();
        let mut total = 0.0;
        for _ in 0..repeats {
            let mut col = original.to_vec();
            col.shuffle(&mut rng);
            work.column_mut(j).assign(&Array1::from(col));
            total += r_squared(y, &model.predict_matrix(work.view())?)?;
        }
        work.column_mut(j).assign(&original);
        out.push((j, baseline - total / repeats as f64));
    }
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(out)
}

const REGRESSOR_KIND: &str = "regressor";

fn push_tree(arrays: &mut Vec<(String, Vec<f64>)>, prefix: &str, tree: &RegressionTree) {
    let cols = tree.to_columns();
    for (name, col) in ["feature", "threshold", "left", "right", "value"].iter().zip(cols) {
        arrays.push((format!("{prefix}.{name}"), col));
    }
}

fn read_tree(ckpt: &Checkpoint, prefix: &str) -> Result<RegressionTree> {
    let get = |n: &str| ckpt.array(&format!("{prefix}.{n}"));
    RegressionTree::from_columns([
        get("feature")?,
        get("threshold")?,
        get("left")?,
        get("right")?,
        get("value")?,
    ])
}

impl Checkpointable for TrainedRegressor {
    const KIND: &'static str = REGRESSOR_KIND;

    fn to_checkpoint(&self) -> Checkpoint {
        let mut arrays = Vec::new();
        let mut meta = json!({
            "config": self.config,
            "catalog_version": self.catalog_version,
            "input_dim": self.input_dim,
        });
        match &self.model {
            RegressorModel::Rf(rf) => {
                meta["trees"] = json!(rf.trees.len());
                for (i, t) in rf.trees.iter().enumerate() {
                    push_tree(&mut arrays, &format!("tree{i}"), t);
                }
            }
            RegressorModel::Gbt(g) => {
                meta["trees"] = json!(g.trees.len());
                arrays.push(("base".into(), vec![g.base]));
                arrays.push(("eta".into(), vec![g.eta]));
                arrays.push(("train_mse".into(), g.train_mse.clone()));
                for (i, t) in g.trees.iter().enumerate() {
                    push_tree(&mut arrays, &format!("tree{i}"), t);
                }
            }
            RegressorModel::Mlp(m) => {
                meta["hidden"] = json!(m.net.b1.len());
                use crate::nn::Parameters;
                arrays.push(("net".into(), m.net.flatten()));
                arrays.push(("x_mean".into(), m.x_mean.clone()));
                arrays.push(("x_scale".into(), m.x_scale.clone()));
                arrays.push(("y".into(), vec![m.y_mean, m.y_scale]));
            }
        }
        Checkpoint {
            kind: REGRESSOR_KIND.into(),
            meta,
            arrays,
        }
    }

    fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let bad = |m: String| Error::invalid(format!("regressor checkpoint: {m}"));
        let config: RegressorConfig = serde_json::from_value(ckpt.meta["config"].clone())
            .map_err(|e| bad(format!("config: {e}")))?;
        let catalog_version = ckpt.meta["catalog_version"]
            .as_u64()
            .ok_or_else(|| bad("missing catalog_version".into()))? as u32;
        let input_dim = ckpt.meta["input_dim"]
            .as_u64()
            .ok_or_else(|| bad("missing input_dim".into()))? as usize;
        let n_trees = || {
            ckpt.meta["trees"]
                .as_u64()
                .map(|v| v as usize)
                .ok_or_else(|| bad("missing tree count".into()))
        };
        let model = match config.kind() {
            RegressorKind::Rf => RegressorModel::Rf(RandomForest {
                trees: (0..n_trees()?)
                    .map(|i| read_tree(ckpt, &format!("tree{i}")))
                    .collect::<Result<_>>()?,
            }),
            RegressorKind::Gbt => RegressorModel::Gbt(GradientBoosting {
                base: ckpt.scalar("base")?,
                eta: ckpt.scalar("eta")?,
                train_mse: ckpt.array("train_mse")?.to_vec(),
                trees: (0..n_trees()?)
                    .map(|i| read_tree(ckpt, &format!("tree{i}")))
                    .collect::<Result<_>>()?,
            }),
            RegressorKind::Mlp => {
                use crate::nn::Parameters;
                let hidden = ckpt.meta["hidden"]
                    .as_u64()
                    .ok_or_else(|| bad("missing hidden size".into()))? as usize;
                let mut net = MlpNet {
                    w1: Array2::zeros((input_dim, hidden)),
                    b1: Array1::zeros(hidden),
                    w2: Array1::zeros(hidden),
                    b2: Array1::zeros(1),
                };
                if !net.assign_flat(ckpt.array("net")?) {
                    return Err(bad("network size mismatch".into()));
                }
                let y = ckpt.array("y")?;
                if y.len() != 2 {
                    return Err(bad("target scaling must hold 2 values".into()));
                }
                RegressorModel::Mlp(MlpModel {
                    net,
                    x_mean: ckpt.array("x_mean")?.to_vec(),
                    x_scale: ckpt.array("x_scale")?.to_vec(),
                    y_mean: y[0],
                    y_scale: y[1],
                })
            }
        };
        Ok(TrainedRegressor {
            model,
            config,
            catalog_version,
            input_dim,
        })
    }
}
