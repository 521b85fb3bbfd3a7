use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{build_mstcn, MsTcnConfig, MsTcnGraph, ModelWeights};
use crate::error::{Error, Result};
use crate::io::ImuSession;
use crate::nn::AdamState;

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: ModelWeights,
    /// Mean total loss over sessions, one entry per epoch.
    pub loss_history: Vec<f64>,
}

/// Full-sequence training: every session is one batch, visited in the given
/// order each epoch. The loss is summed over stages.
pub fn train(config: &MsTcnConfig, sessions: &[ImuSession]) -> Result<TrainOutcome> {
    config.validate()?;
    if sessions.is_empty() {
        return Err(Error::invalid("training needs at least one session"));
    }
    for s in sessions {
        if s.labels.is_none() {
            return Err(Error::invalid(format!(
                "session {} has no labels",
                s.subject_id
            )));
        }
        if s.channels() != config.stage.in_channels {
            return Err(Error::dim(format!(
                "session {} has {} channels, model expects {}",
                s.subject_id,
                s.channels(),
                config.stage.in_channels
            )));
        }
    }

    let mut weights = build_mstcn(config, config.seed)?;
    let (mean, scale) = channel_stats(sessions);
    weights.input_mean = mean;
    weights.input_scale = scale;

    let mut adam = AdamState::for_params(&weights, config.optimizer);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_d80b);
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut total = 0.0;
        for s in sessions {
            let labels = s.labels.as_deref().expect("checked above");
            let grads = {
                let mut graph = MsTcnGraph::new(&weights);
                graph.forward_train(&s.samples, &mut rng)?;
                total += graph.loss(labels)?;
                graph.backward(labels)?
            };
            adam.step(&mut weights, &grads)?;
        }
        let mean_loss = total / sessions.len() as f64;
        if !mean_loss.is_finite() {
            return Err(Error::State(format!("training loss diverged at epoch {epoch}")));
        }
        log::debug!("tcn epoch {epoch}: loss {mean_loss:.5}");
        history.push(mean_loss);
    }
    Ok(TrainOutcome {
        weights,
        loss_history: history,
    })
}

/// Per-channel mean and standard deviation over all samples; near-constant
/// channels keep unit scale.
fn channel_stats(sessions: &[ImuSession]) -> (Vec<f64>, Vec<f64>) {
    let channels = sessions[0].channels();
    let mut sum = vec![0.0; channels];
    let mut sq = vec![0.0; channels];
    let mut n = 0usize;
    for s in sessions {
        for row in s.samples.rows() {
            for (c, &v) in row.iter().enumerate() {
                sum[c] += v;
                sq[c] += v * v;
            }
        }
        n += s.len();
    }
    let n = n as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let scale = sq
        .iter()
        .zip(&mean)
        .map(|(q, m)| {
            let var = (q / n - m * m).max(0.0);
            if var.sqrt() > 1e-8 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    (mean, scale)
}
