use ndarray::Array2;
use rand::Rng;

use super::{ModelWeights, StageWeights};
use crate::error::{Error, Result};
use crate::nn::{
    cross_entropy_grad_logp, cross_entropy_loss, logp_grad_to_logits, relu, relu_backward,
    softmax_backward, softmax_rows, tmse_grad_logp, tmse_loss, Tensor2,
};

struct LayerCache {
    input: Tensor2,
    pre: Tensor2,
    act: Tensor2,
    /// Inverted-dropout multipliers, present only for training passes.
    mask: Option<Tensor2>,
}

struct StageCache {
    input: Tensor2,
    layers: Vec<LayerCache>,
    features: Tensor2,
    probs: Tensor2,
}

/// One forward/backward evaluation of an MS-TCN with retained activations.
pub struct MsTcnGraph<'w> {
    weights: &'w ModelWeights,
    cache: Option<Vec<StageCache>>,
}

impl<'w> MsTcnGraph<'w> {
    pub fn new(weights: &'w ModelWeights) -> Self {
        MsTcnGraph {
            weights,
            cache: None,
        }
    }

    /// Runs all stages on raw samples and keeps the activations.
    pub fn forward(&mut self, samples: &Tensor2) -> Result<Vec<Tensor2>> {
        self.forward_impl::<rand::rngs::mock::StepRng>(samples, None)
    }

    /// Like [`forward`](Self::forward), sampling dropout masks from `rng`
    /// when the config enables dropout.
    pub fn forward_train<R: Rng>(&mut self, samples: &Tensor2, rng: &mut R) -> Result<Vec<Tensor2>> {
        self.forward_impl(samples, Some(rng))
    }

    fn forward_impl<R: Rng>(&mut self, samples: &Tensor2, mut rng: Option<&mut R>) -> Result<Vec<Tensor2>> {
        let dropout = self.weights.config.dropout;
        let mut x = self.weights.normalize(samples)?;
        let mut caches = Vec::with_capacity(self.weights.stages.len());
        for stage in &self.weights.stages {
            let cache = stage_forward(stage, x, dropout, rng.as_deref_mut())?;
            x = cache.probs.clone();
            caches.push(cache);
        }
        let probs = caches.iter().map(|c| c.probs.clone()).collect();
        self.cache = Some(caches);
        Ok(probs)
    }

    fn caches(&self) -> Result<&[StageCache]> {
        self.cache
            .as_deref()
            .ok_or_else(|| Error::State("backward called before forward".into()))
    }

    /// Σ over stages of CE + λ·TMSE for the last forward pass.
    pub fn loss(&self, labels: &[usize]) -> Result<f64> {
        let cfg = &self.weights.config.loss;
        self.caches()?.iter().try_fold(0.0, |acc, c| {
            Ok(acc + cross_entropy_loss(&c.probs, labels)? + cfg.lambda_tmse * tmse_loss(&c.probs, cfg))
        })
    }

    /// Exact gradient of [`loss`](Self::loss) for every parameter.
    pub fn backward(&self, labels: &[usize]) -> Result<ModelWeights> {
        let caches = self.caches()?;
        let cfg = &self.weights.config.loss;
        let mut grads = self.weights.zeros_like();
        let mut upstream: Option<Tensor2> = None;
        for (s, cache) in caches.iter().enumerate().rev() {
            let mut g_logp = cross_entropy_grad_logp(&cache.probs, labels)?;
            if cfg.lambda_tmse != 0.0 {
                g_logp.scaled_add(cfg.lambda_tmse, &tmse_grad_logp(&cache.probs, cfg));
            }
            let mut g_logits = logp_grad_to_logits(&cache.probs, &g_logp);
            if let Some(g_probs) = upstream.take() {
                g_logits += &softmax_backward(&cache.probs, &g_probs);
            }
            let g_in = stage_backward(&self.weights.stages[s], cache, &g_logits, &mut grads.stages[s])?;
            upstream = Some(g_in);
        }
        let wd = self.weights.config.weight_decay;
        if wd > 0.0 {
            let flat = crate::nn::Parameters::flatten(self.weights);
            let mut g = crate::nn::Parameters::flatten(&grads);
            g.iter_mut().zip(&flat).for_each(|(gi, wi)| *gi += wd * wi);
            crate::nn::Parameters::assign_flat(&mut grads, &g);
        }
        Ok(grads)
    }
}

fn stage_forward<R: Rng>(
    stage: &StageWeights,
    input: Tensor2,
    dropout: f64,
    mut rng: Option<&mut R>,
) -> Result<StageCache> {
    let mut x = stage.input.forward(&input)?;
    let mut layers = Vec::with_capacity(stage.layers.len());
    for layer in &stage.layers {
        let pre = layer.dilated.forward(&x)?;
        let mut act = relu(&pre);
        let mask = match rng.as_deref_mut() {
            Some(rng) if dropout > 0.0 => {
                let keep = 1.0 - dropout;
                let m = Array2::from_shape_fn(act.raw_dim(), |_| {
                    if rng.gen::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                });
                act *= &m;
                Some(m)
            }
            _ => None,
        };
        let next = &x + &layer.pointwise.forward(&act)?;
        layers.push(LayerCache {
            input: x,
            pre,
            act,
            mask,
        });
        x = next;
    }
    let probs = softmax_rows(&stage.output.forward(&x)?);
    Ok(StageCache {
        input,
        layers,
        features: x,
        probs,
    })
}

fn stage_backward(
    stage: &StageWeights,
    cache: &StageCache,
    g_logits: &Tensor2,
    grads: &mut StageWeights,
) -> Result<Tensor2> {
    let mut g = stage.output.backward(&cache.features, g_logits, &mut grads.output)?;
    for ((layer, lc), lg) in stage
        .layers
        .iter()
        .zip(&cache.layers)
        .zip(grads.layers.iter_mut())
        .rev()
    {
        let mut g_act = layer.pointwise.backward(&lc.act, &g, &mut lg.pointwise)?;
        if let Some(mask) = &lc.mask {
            g_act *= mask;
        }
        let g_pre = relu_backward(&lc.pre, &g_act);
        g += &layer.dilated.backward(&lc.input, &g_pre, &mut lg.dilated)?;
    }
    stage.input.backward(&cache.input, &g, &mut grads.input)
}
