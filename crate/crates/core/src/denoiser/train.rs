use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{DenoiserHyper, DenoiserModel};
use crate::error::{Error, Result};
use crate::forward::{flip_bits, NoisyGraph};
use crate::graph::{CondGraph, MAX_NODES};
use crate::optim::{Adam, AdamConfig};
use crate::schedule::NoiseSchedule;
use crate::seeded_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    /// Weight of the edge cross-entropy.
    pub lambda: f64,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 3000,
            batch_size: 8,
            lambda: 1.0,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: DenoiserModel,
    /// Mean per-graph loss of each optimizer step.
    pub loss_trace: Vec<f64>,
}

pub(crate) fn check_corpus(corpus: &[CondGraph]) -> Result<()> {
    if corpus.is_empty() {
        return Err(Error::Empty("training corpus".into()));
    }
    if let Some(g) = corpus.iter().find(|g| g.n() == 0 || g.n() > MAX_NODES) {
        return Err(Error::InvalidGraph(format!(
            "training graphs need 1..={MAX_NODES} nodes, found {}",
            g.n()
        )));
    }
    Ok(())
}

/// Summed loss and gradient over a batch of `(noisy, clean)` pairs.
/// Per-example gradients may be computed in parallel; they are reduced in
/// index order.
pub fn batch_grad(
    model: &DenoiserModel,
    batch: &[(NoisyGraph, &CondGraph)],
    lambda: f64,
) -> Result<(f64, Vec<f64>)> {
    let parts: Vec<_> = batch
        .par_iter()
        .map(|(noisy, clean)| {
            let feats = model.features(noisy);
            model.loss_and_grad(&feats, noisy, clean, lambda)
        })
        .collect::<Result<_>>()?;
    let mut total = 0.0;
    let mut grad = vec![0.0; model.params().len()];
    for (loss, g) in parts {
        total += loss.total;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok((total, grad))
}

/// Samples a graph and a step uniformly, corrupts, and takes one optimizer
/// step per batch.
pub fn train(
    corpus: &[CondGraph],
    schedule: &NoiseSchedule,
    hyper: DenoiserHyper,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    check_corpus(corpus)?;
    if cfg.batch_size == 0 {
        return Err(Error::InvalidParameter("batch_size must be >= 1".into()));
    }
    let hyper = DenoiserHyper {
        steps: schedule.steps(),
        ..hyper
    };
    let mut init_rng = seeded_rng(cfg.seed, 1);
    let mut model = DenoiserModel::init(hyper, &mut init_rng);
    let mut rng = seeded_rng(cfg.seed, 0);
    let mut opt = Adam::new(cfg.adam.clone(), model.params().len());
    let mut trace = Vec::with_capacity(cfg.steps);
    let big_t = schedule.steps();

    for _ in 0..cfg.steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            let clean = &corpus[rng.gen_range(0..corpus.len())];
            let t = rng.gen_range(1..=big_t);
            let flip = schedule.cumulative_kernel(t)?.flip;
            let noisy = NoisyGraph {
                graph: flip_bits(clean, flip, &mut rng),
                t,
            };
            batch.push((noisy, clean));
        }
        let (loss, grad) = batch_grad(&model, &batch, cfg.lambda)?;
        trace.push(loss / cfg.batch_size as f64);
        opt.step(model.params_mut(), &grad);
    }
    Ok(TrainOutcome {
        model,
        loss_trace: trace,
    })
}
