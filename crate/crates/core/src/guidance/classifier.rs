use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::denoiser::features::{extract_features, features_with_structure, pooled, Structure, POOLED_FEATS};
use crate::error::{Error, Result};
use crate::forward::{flip_bits, ContagionParam, NoisyGraph};
use crate::graph::CondGraph;
use crate::nn::{clamp_prob, logistic_bce, sigmoid, Mlp};
use crate::optim::{Adam, AdamConfig};
use crate::schedule::NoiseSchedule;
use crate::seeded_rng;

/// Logistic classifier over pooled noisy-graph features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphClassifier {
    pub hidden: Vec<usize>,
    /// Number of diffusion steps the time features are scaled by.
    pub steps: usize,
    pub contagion_p: f64,
    pub params: Vec<f64>,
}

impl GraphClassifier {
    fn mlp(&self) -> Mlp {
        Mlp::new(POOLED_FEATS, &self.hidden)
    }

    /// Classifier whose output is 0.5 everywhere.
    pub fn constant(hidden: Vec<usize>, steps: usize) -> Self {
        let len = Mlp::new(POOLED_FEATS, &hidden).param_count();
        GraphClassifier {
            hidden,
            steps,
            contagion_p: ContagionParam::default().p(),
            params: vec![0.0; len],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let want = self.mlp().param_count();
        if self.params.len() != want {
            return Err(Error::DimensionMismatch(format!(
                "classifier expects {want} parameters, got {}",
                self.params.len()
            )));
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidParameter("non-finite classifier parameter".into()));
        }
        ContagionParam::new(self.contagion_p)?;
        Ok(())
    }

    fn contagion(&self) -> ContagionParam {
        ContagionParam::new(self.contagion_p).unwrap_or_default()
    }

    pub fn features(&self, g: &NoisyGraph) -> [f64; POOLED_FEATS] {
        pooled(&extract_features(g, self.steps, self.contagion()))
    }

    /// Same as [`features`](Self::features) with precomputed edge statistics.
    pub fn features_with(&self, g: &CondGraph, s: &Structure, t: usize) -> [f64; POOLED_FEATS] {
        pooled(&features_with_structure(g, s, t, self.steps, self.contagion()))
    }

    /// Probability in `[1e-7, 1 - 1e-7]`.
    pub fn prob_from_features(&self, x: &[f64; POOLED_FEATS]) -> f64 {
        clamp_prob(sigmoid(self.mlp().logit(&self.params, x)))
    }

    pub fn prob(&self, g: &NoisyGraph) -> f64 {
        self.prob_from_features(&self.features(g))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierTrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for ClassifierTrainConfig {
    fn default() -> Self {
        ClassifierTrainConfig {
            steps: 1500,
            batch_size: 16,
            hidden: vec![32],
            seed: 0,
            adam: AdamConfig {
                lr: 5e-3,
                ..AdamConfig::default()
            },
        }
    }
}

/// Fits a classifier to `(corrupt(g, t), label)` pairs with `t` uniform in
/// `1..=T` and returns it with the mean batch loss of every step. `stream`
/// separates the random streams of classifiers trained from the same seed.
pub fn train_graph_classifier(
    examples: &[(&CondGraph, bool)],
    schedule: &NoiseSchedule,
    contagion: ContagionParam,
    cfg: &ClassifierTrainConfig,
    stream: u64,
) -> Result<(GraphClassifier, Vec<f64>)> {
    if examples.is_empty() {
        return Err(Error::Empty("classifier training set".into()));
    }
    let positives = examples.iter().filter(|(_, y)| *y).count();
    if positives == 0 || positives == examples.len() {
        return Err(Error::InvalidParameter(format!(
            "degenerate classifier labels: {positives} of {} positive",
            examples.len()
        )));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidParameter("batch_size must be >= 1".into()));
    }
    let mlp = Mlp::new(POOLED_FEATS, &cfg.hidden);
    let mut init_rng = seeded_rng(cfg.seed, 2 * stream + 1);
    let mut clf = GraphClassifier {
        hidden: cfg.hidden.clone(),
        steps: schedule.steps(),
        contagion_p: contagion.p(),
        params: mlp.init(&mut init_rng),
    };
    let mut rng = seeded_rng(cfg.seed, 2 * stream);
    let mut opt = Adam::new(cfg.adam.clone(), clf.params.len());
    let big_t = schedule.steps();
    let mut grad = vec![0.0; clf.params.len()];
    let mut trace = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut batch_loss = 0.0;
        for _ in 0..cfg.batch_size {
            let (g, label) = examples[rng.gen_range(0..examples.len())];
            let t = rng.gen_range(1..=big_t);
            let flip = schedule.cumulative_kernel(t)?.flip;
            let noisy = NoisyGraph {
                graph: flip_bits(g, flip, &mut rng),
                t,
            };
            let x = clf.features(&noisy);
            let (logit, cache) = mlp.forward(&clf.params, &x);
            let (_, loss, d) = logistic_bce(logit, label);
            batch_loss += loss;
            mlp.backward(&clf.params, &cache, d / cfg.batch_size as f64, &mut grad);
        }
        trace.push(batch_loss / cfg.batch_size as f64);
        opt.step(&mut clf.params, &grad);
    }
    Ok((clf, trace))
}
