//! Multi-stage temporal convolutional network for sample-wise jump
//! classification.
//!
//! A stage maps a `T × D` sequence to `T × J` logits through a 1×1 input
//! projection, a stack of dilated residual layers (dilation doubling per
//! layer) and a 1×1 classifier. Every stage after the first consumes the
//! softmax of its predecessor, so later stages refine earlier predictions.

mod graph;
mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::ImuSession;
use crate::nn::{softmax_rows, AdamConfig, Conv1d, LossConfig, Parameters, Tensor2};

pub use graph::MsTcnGraph;
pub use train::{train, TrainOutcome};

/// Bumped whenever the parameter layout of [`ModelWeights`] changes.
pub const TCN_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SsTcnConfig {
    pub num_layers: usize,
    pub num_filters: usize,
    pub kernel_size: usize,
    pub in_channels: usize,
    pub num_classes: usize,
}

impl Default for SsTcnConfig {
    fn default() -> Self {
        SsTcnConfig {
            num_layers: 10,
            num_filters: 64,
            kernel_size: 3,
            in_channels: 6,
            num_classes: 8,
        }
    }
}

impl SsTcnConfig {
    /// Receptive field of one stage in samples.
    pub fn receptive_field(&self) -> usize {
        let half = (self.kernel_size - 1) / 2;
        (0..self.num_layers).fold(1, |rf, l| rf + 2 * half * (1 << l))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MsTcnConfig {
    pub num_stages: usize,
    pub stage: SsTcnConfig,
    pub loss: LossConfig,
    pub optimizer: AdamConfig,
    pub epochs: usize,
    pub seed: u64,
    /// Dropout on residual activations during training. Off by default.
    pub dropout: f64,
    /// L2 penalty added to every gradient. Off by default.
    pub weight_decay: f64,
}

impl Default for MsTcnConfig {
    fn default() -> Self {
        MsTcnConfig {
            num_stages: 4,
            stage: SsTcnConfig::default(),
            loss: LossConfig::default(),
            optimizer: AdamConfig::default(),
            epochs: 50,
            seed: 0,
            dropout: 0.0,
            weight_decay: 0.0,
        }
    }
}

impl MsTcnConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.stage;
        if self.num_stages == 0 || s.num_layers == 0 {
            return Err(Error::invalid("num_stages and num_layers must be >= 1"));
        }
        if s.num_filters == 0 || s.in_channels == 0 || s.num_classes == 0 {
            return Err(Error::invalid(
                "num_filters, in_channels and num_classes must be >= 1",
            ));
        }
        if s.kernel_size.is_multiple_of(2) {
            return Err(Error::invalid("kernel_size must be odd"));
        }
        if s.num_layers > 30 {
            return Err(Error::invalid("num_layers above 30 overflows the dilation"));
        }
        if !(0.0..1.0).contains(&self.dropout) || self.weight_decay < 0.0 {
            return Err(Error::invalid("dropout must be in [0, 1), weight_decay >= 0"));
        }
        self.loss.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualLayer {
    pub dilated: Conv1d,
    pub pointwise: Conv1d,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageWeights {
    pub input: Conv1d,
    pub layers: Vec<ResidualLayer>,
    pub output: Conv1d,
}

impl StageWeights {
    fn zeros(cfg: &SsTcnConfig, in_channels: usize) -> Result<Self> {
        let f = cfg.num_filters;
        let layers = (0..cfg.num_layers)
            .map(|l| {
                Ok(ResidualLayer {
                    dilated: Conv1d::zeros(cfg.kernel_size, f, f, 1 << l)?,
                    pointwise: Conv1d::zeros(1, f, f, 1)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(StageWeights {
            input: Conv1d::zeros(1, in_channels, f, 1)?,
            layers,
            output: Conv1d::zeros(1, f, cfg.num_classes, 1)?,
        })
    }

    fn convs(&self) -> impl Iterator<Item = &Conv1d> {
        std::iter::once(&self.input)
            .chain(self.layers.iter().flat_map(|l| [&l.dilated, &l.pointwise]))
            .chain(std::iter::once(&self.output))
    }

    fn convs_mut(&mut self) -> impl Iterator<Item = &mut Conv1d> {
        std::iter::once(&mut self.input)
            .chain(
                self.layers
                    .iter_mut()
                    .flat_map(|l| [&mut l.dilated, &mut l.pointwise]),
            )
            .chain(std::iter::once(&mut self.output))
    }

    /// Logits of this stage for an already-normalized input.
    pub fn forward(&self, input: &Tensor2) -> Result<Tensor2> {
        let mut x = self.input.forward(input)?;
        for layer in &self.layers {
            let h = layer.dilated.forward(&x)?;
            let a = crate::nn::relu(&h);
            x += &layer.pointwise.forward(&a)?;
        }
        self.output.forward(&x)
    }
}

/// Trained (or freshly initialized) MS-TCN parameters.
///
/// `input_mean`/`input_scale` standardize raw channels before the first
/// stage; they are fitted from training data and are not optimized.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub config: MsTcnConfig,
    pub stages: Vec<StageWeights>,
    pub input_mean: Vec<f64>,
    pub input_scale: Vec<f64>,
}

impl Parameters for ModelWeights {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        for conv in self.stages.iter().flat_map(|s| s.convs()) {
            conv.visit(f);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        for conv in self.stages.iter_mut().flat_map(|s| s.convs_mut()) {
            conv.visit_mut(f);
        }
    }
}

impl ModelWeights {
    /// All-zero weights with the layout implied by `config`.
    pub fn zeros(config: &MsTcnConfig) -> Result<Self> {
        config.validate()?;
        let s = &config.stage;
        let stages = (0..config.num_stages)
            .map(|i| {
                let din = if i == 0 { s.in_channels } else { s.num_classes };
                StageWeights::zeros(s, din)
            })
            .collect::<Result<_>>()?;
        Ok(ModelWeights {
            config: config.clone(),
            stages,
            input_mean: vec![0.0; s.in_channels],
            input_scale: vec![1.0; s.in_channels],
        })
    }

    /// Zeroed copy with the same layout, used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }

    pub fn in_channels(&self) -> usize {
        self.config.stage.in_channels
    }

    pub fn num_classes(&self) -> usize {
        self.config.stage.num_classes
    }

    pub fn normalize(&self, samples: &Tensor2) -> Result<Tensor2> {
        if samples.ncols() != self.in_channels() {
            return Err(Error::dim(format!(
                "model expects {} channels, session has {}",
                self.in_channels(),
                samples.ncols()
            )));
        }
        let mut x = samples.clone();
        for (c, mut col) in x.columns_mut().into_iter().enumerate() {
            let (m, sc) = (self.input_mean[c], self.input_scale[c]);
            col.mapv_inplace(|v| (v - m) / sc);
        }
        Ok(x)
    }
}

/// Closed-form parameter count of an MS-TCN built from `config`.
pub fn parameter_count(config: &MsTcnConfig) -> usize {
    let s = &config.stage;
    let f = s.num_filters;
    let stage = |din: usize| {
        (din * f + f)
            + s.num_layers * (s.kernel_size * f * f + f + f * f + f)
            + (f * s.num_classes + s.num_classes)
    };
    stage(s.in_channels) + (config.num_stages - 1) * stage(s.num_classes)
}

/// Deterministic uniform ±1/√fan_in initialization.
pub fn build_mstcn(config: &MsTcnConfig, seed: u64) -> Result<ModelWeights> {
    let mut weights = ModelWeights::zeros(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for conv in weights.stages.iter_mut().flat_map(|s| s.convs_mut()) {
        conv.init_uniform(&mut rng);
    }
    Ok(weights)
}

/// Logits of one stage. `input` is the stage's own input: normalized
/// channels for stage 0, previous-stage probabilities afterwards.
pub fn sstcn_forward(weights: &ModelWeights, stage_index: usize, input: &Tensor2) -> Result<Tensor2> {
    let stage = weights.stages.get(stage_index).ok_or_else(|| {
        Error::dim(format!(
            "stage {stage_index} out of range ({} stages)",
            weights.stages.len()
        ))
    })?;
    stage.forward(input)
}

/// Per-stage probabilities for raw session samples; the last entry is the
/// final prediction.
pub fn mstcn_forward(weights: &ModelWeights, samples: &Tensor2) -> Result<Vec<Tensor2>> {
    let mut x = weights.normalize(samples)?;
    let mut out = Vec::with_capacity(weights.stages.len());
    for stage in &weights.stages {
        let p = softmax_rows(&stage.forward(&x)?);
        x = p.clone();
        out.push(p);
    }
    Ok(out)
}

/// Row-wise argmax; ties go to the lowest class index.
pub fn argmax_rows(probs: &Tensor2) -> Vec<usize> {
    probs
        .rows()
        .into_iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
                    if v > bv {
                        (i, v)
                    } else {
                        (bi, bv)
                    }
                })
                .0
        })
        .collect()
}

/// Final-stage probabilities and hard labels for a session.
pub fn predict(weights: &ModelWeights, session: &ImuSession) -> Result<(Tensor2, Vec<usize>)> {
    let mut stages = mstcn_forward(weights, &session.samples)?;
    let probs = stages.pop().expect("at least one stage");
    let labels = argmax_rows(&probs);
    Ok((probs, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::Rng;

    fn small(stages: usize, layers: usize, filters: usize, cin: usize, classes: usize) -> MsTcnConfig {
        MsTcnConfig {
            num_stages: stages,
            stage: SsTcnConfig {
                num_layers: layers,
                num_filters: filters,
                kernel_size: 3,
                in_channels: cin,
                num_classes: classes,
            },
            ..Default::default()
        }
    }

    #[test]
    fn build_is_deterministic() {
        let cfg = small(2, 3, 5, 6, 4);
        let a = build_mstcn(&cfg, 9).unwrap();
        let b = build_mstcn(&cfg, 9).unwrap();
        let bytes = |w: &ModelWeights| {
            w.flatten()
                .iter()
                .flat_map(|v| v.to_le_bytes())
                .collect::<Vec<_>>()
        };
        assert_eq!(bytes(&a), bytes(&b));
        assert_ne!(a.flatten(), build_mstcn(&cfg, 10).unwrap().flatten());
        assert_eq!(build_mstcn(&small(1, 2, 3, 6, 4), 0).unwrap().stages.len(), 1);
    }

    #[test]
    fn parameter_count_matches_enumeration() {
        let cfg = MsTcnConfig::default();
        let w = build_mstcn(&cfg, 1).unwrap();
        // enumerate tensor shapes independently of the closed form
        let mut enumerated = 0;
        for s in &w.stages {
            for conv in s.convs() {
                let (k, i, o) = conv.weight.dim();
                enumerated += k * i * o + conv.bias.len();
            }
        }
        assert_eq!(w.param_count(), enumerated);
        assert_eq!(parameter_count(&cfg), enumerated);
        // first stage: 6→64, 10 layers of (3·64·64+64 + 64·64+64), 64→8
        let stage0 = (6 * 64 + 64) + 10 * (3 * 4096 + 64 + 4096 + 64) + (64 * 8 + 8);
        let later = (8 * 64 + 64) + 10 * (3 * 4096 + 64 + 4096 + 64) + (64 * 8 + 8);
        assert_eq!(enumerated, stage0 + 3 * later);
    }

    #[test]
    fn receptive_field_recurrence() {
        assert_eq!(SsTcnConfig::default().receptive_field(), 2047);
        let two = SsTcnConfig {
            num_layers: 2,
            ..Default::default()
        };
        assert_eq!(two.receptive_field(), 7);
    }

    #[test]
    fn zero_weights_give_zero_logits() {
        let w = ModelWeights::zeros(&small(1, 3, 4, 6, 5)).unwrap();
        let x = Array2::from_elem((17, 6), 2.5);
        let logits = sstcn_forward(&w, 0, &x).unwrap();
        assert_eq!(logits.dim(), (17, 5));
        assert!(logits.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shapes_and_softmax_rows() {
        let w = build_mstcn(&small(3, 2, 4, 6, 5), 2).unwrap();
        for len in [1, 2, 31] {
            let x = Array2::from_shape_fn((len, 6), |(t, c)| (t as f64 * 0.3 + c as f64).sin());
            let probs = mstcn_forward(&w, &x).unwrap();
            assert_eq!(probs.len(), 3);
            for p in &probs {
                assert_eq!(p.dim(), (len, 5));
                for row in p.rows() {
                    assert!((row.sum() - 1.0).abs() < 1e-9);
                }
            }
        }
        assert!(matches!(
            mstcn_forward(&w, &Array2::zeros((4, 5))),
            Err(Error::Dimension(_))
        ));
        assert!(sstcn_forward(&w, 1, &Array2::zeros((4, 6))).is_err());
    }

    #[test]
    fn single_stage_equals_softmax_of_stage_forward() {
        let w = build_mstcn(&small(1, 3, 4, 6, 3), 5).unwrap();
        let x = Array2::from_shape_fn((20, 6), |(t, c)| ((t * 7 + c) % 5) as f64 - 2.0);
        let probs = mstcn_forward(&w, &x).unwrap();
        assert_eq!(probs.len(), 1);
        assert_eq!(probs[0], softmax_rows(&sstcn_forward(&w, 0, &x).unwrap()));
    }

    #[test]
    fn argmax_ties_and_shift_invariance() {
        let p = ndarray::array![[0.2, 0.4, 0.4], [0.5, 0.5, 0.0], [0.1, 0.2, 0.7]];
        assert_eq!(argmax_rows(&p), vec![1, 0, 2]);
        let logits = ndarray::array![[0.3, 1.2, -0.5], [2.0, -1.0, 1.9]];
        let shifted = &logits + 17.5;
        assert_eq!(
            argmax_rows(&softmax_rows(&logits)),
            argmax_rows(&softmax_rows(&shifted))
        );
    }

    fn locality(cfg: MsTcnConfig, len: usize, t0: usize) {
        let w = build_mstcn(&cfg, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = Array2::from_shape_fn((len, cfg.stage.in_channels), |_| rng.gen_range(-1.0..1.0));
        let mut y = x.clone();
        for c in 0..cfg.stage.in_channels {
            y[[t0, c]] += 1.0;
        }
        let a = sstcn_forward(&w, 0, &x).unwrap();
        let b = sstcn_forward(&w, 0, &y).unwrap();
        let half = (cfg.stage.receptive_field() - 1) / 2;
        for t in 0..len {
            let changed = a.row(t) != b.row(t);
            let inside = t + half >= t0 && t <= t0 + half;
            if !inside {
                assert!(!changed, "logit at {t} changed outside the receptive field");
            }
        }
        // the edges of the field are reached
        assert!(a.row(t0 - half) != b.row(t0 - half));
        assert!(a.row(t0 + half) != b.row(t0 + half));
    }

    #[test]
    fn temporal_locality_small() {
        locality(small(1, 2, 4, 6, 3), 40, 20);
    }

    #[test]
    fn temporal_locality_default_stage() {
        let cfg = MsTcnConfig {
            num_stages: 1,
            ..Default::default()
        };
        locality(cfg, 2600, 1300);
    }

    #[test]
    fn predict_single_sample() {
        let w = build_mstcn(&small(2, 2, 4, 6, 8), 1).unwrap();
        let session = ImuSession::new("s", Array2::zeros((1, 6)), None).unwrap();
        let (probs, labels) = predict(&w, &session).unwrap();
        assert_eq!(probs.nrows(), 1);
        assert_eq!(labels.len(), 1);
        let again = predict(&w, &session).unwrap().1;
        assert_eq!(labels, again);
    }
}
