//! Helpers shared by the integration and acceptance tests.
#![allow(dead_code)]

use dualcond::denoiser::{extract_features, CleanPrediction, DenoiserHyper, DenoiserModel};
use dualcond::error::Result;
use dualcond::forward::NoisyGraph;
use dualcond::graph::CondGraph;
use dualcond::sampler::CleanPredictor;
use dualcond::schedule::NoiseSchedule;
use rand::Rng;

pub fn random_graph<R: Rng>(n: usize, density: f64, rng: &mut R) -> CondGraph {
    let mut g = CondGraph::from_edges(
        n,
        &[],
        (0..n).map(|_| rng.gen()).collect(),
        (0..n).map(|_| rng.gen()).collect(),
    )
    .unwrap();
    for i in 0..n {
        for j in (i + 1)..n {
            g.set_edge(i, j, rng.gen::<f64>() < density);
        }
    }
    g
}

pub fn random_permutation<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// Result of comparing analytic gradients with central differences.
#[derive(Debug, Clone, Copy, Default)]
pub struct GradCheck {
    /// Largest relative error over smooth coordinates.
    pub worst: f64,
    pub checked: usize,
    /// Coordinates whose interval `[w - h, w + h]` straddles a ReLU kink.
    pub kinked: usize,
}

/// Compares the analytic gradient with central differences of step `h` on
/// every parameter. Relative errors use `max(|analytic|, |numeric|, floor)`
/// as the scale. A coordinate counts as kinked, and is left out, when its
/// forward and backward one-sided differences disagree by more than 1% of
/// the scale: a smooth loss keeps them within `h * |f''|`.
pub fn gradient_check(model: &DenoiserModel, noisy: &NoisyGraph, clean: &CondGraph, h: f64, floor: f64) -> GradCheck {
    let feats = extract_features(noisy, model.hyper().steps, model.contagion());
    let (parts, grad) = model.loss_and_grad(&feats, noisy, clean, 1.0).unwrap();
    let mut probe = model.clone();
    let mut out = GradCheck::default();
    for k in 0..grad.len() {
        let w = model.params()[k];
        probe.params_mut()[k] = w + h;
        let up = probe.loss_and_grad(&feats, noisy, clean, 1.0).unwrap().0.total;
        probe.params_mut()[k] = w - h;
        let down = probe.loss_and_grad(&feats, noisy, clean, 1.0).unwrap().0.total;
        probe.params_mut()[k] = w;
        let numeric = (up - down) / (2.0 * h);
        let scale = grad[k].abs().max(numeric.abs()).max(floor);
        let forward = (up - parts.total) / h;
        let backward = (parts.total - down) / h;
        if (forward - backward).abs() > 1e-2 * scale {
            out.kinked += 1;
            continue;
        }
        out.checked += 1;
        out.worst = out.worst.max((grad[k] - numeric).abs() / scale);
    }
    out
}

pub fn small_hyper(steps: usize) -> DenoiserHyper {
    DenoiserHyper {
        rounds: 2,
        hidden: 8,
        contagion_p: 0.8,
        steps,
    }
}

/// Exact clean-graph posterior for a known distribution over graphs of one
/// fixed size: `P(x0 | x_t)` by enumeration, reported as per-variable
/// marginals.
pub struct BayesOracle {
    pub support: Vec<(CondGraph, f64)>,
    pub schedule: NoiseSchedule,
}

impl BayesOracle {
    pub fn from_corpus(corpus: &[CondGraph], schedule: NoiseSchedule) -> Self {
        let mut support: Vec<(CondGraph, f64)> = Vec::new();
        for g in corpus {
            match support.iter_mut().find(|(h, _)| h == g) {
                Some((_, w)) => *w += 1.0,
                None => support.push((g.clone(), 1.0)),
            }
        }
        let total = corpus.len() as f64;
        for (_, w) in &mut support {
            *w /= total;
        }
        BayesOracle { support, schedule }
    }
}

fn bits(g: &CondGraph) -> Vec<bool> {
    let mut v: Vec<bool> = g.x1().iter().chain(g.x2()).copied().collect();
    for i in 0..g.n() {
        for j in (i + 1)..g.n() {
            v.push(g.has_edge(i, j));
        }
    }
    v
}

impl CleanPredictor for BayesOracle {
    fn predict_clean(&self, g: &NoisyGraph) -> Result<CleanPrediction> {
        let flip = self.schedule.cumulative_kernel(g.t)?.flip;
        let noisy = bits(&g.graph);
        let mut marg = vec![0.0; noisy.len()];
        let mut z = 0.0;
        for (clean, w) in &self.support {
            let b = bits(clean);
            let like: f64 = b
                .iter()
                .zip(&noisy)
                .map(|(a, c)| if a == c { 1.0 - flip } else { flip })
                .product();
            let post = w * like;
            z += post;
            for (m, &bit) in marg.iter_mut().zip(&b) {
                if bit {
                    *m += post;
                }
            }
        }
        let n = g.graph.n();
        let marg: Vec<f64> = marg.into_iter().map(|m| m / z).collect();
        Ok(CleanPrediction::from_parts(
            marg[..n].to_vec(),
            marg[n..2 * n].to_vec(),
            &marg[2 * n..],
        ))
    }
}

/// Index of a 2-node graph among the 8 states of `(x1[0], x1[1], edge)`.
pub fn two_node_state(g: &CondGraph) -> usize {
    (g.x1()[0] as usize) << 2 | (g.x1()[1] as usize) << 1 | g.has_edge(0, 1) as usize
}
