//! Reverse-time generation.
//!
//! Each step predicts clean-bit probabilities from the current graph, mixes
//! the exact single-variable posteriors over them, optionally reweights by
//! classifier ratios, and resamples every variable from the same snapshot.
//! Random draws follow a fixed order: x1 bits, x2 bits, then pairs
//! `(i, j)`, `i < j`, lexicographically, one draw per variable per step.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::denoiser::{CleanPrediction, DenoiserModel};
use crate::error::{Error, Result};
use crate::forward::NoisyGraph;
use crate::graph::{CondGraph, Condition};
use crate::guidance::{classifier_ratios, guide_bernoulli, GuidanceClassifiers, GuidanceRatios};
use crate::schedule::{posterior_one, NoiseSchedule, TransitionKernel};
use crate::seeded_rng;

/// Anything that maps a noisy graph to clean-bit probabilities.
pub trait CleanPredictor: Sync {
    fn predict_clean(&self, g: &NoisyGraph) -> Result<CleanPrediction>;
}

impl CleanPredictor for DenoiserModel {
    fn predict_clean(&self, g: &NoisyGraph) -> Result<CleanPrediction> {
        self.predict_graph(g)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRun {
    pub seed: u64,
    pub num_graphs: usize,
    /// Node counts to draw from, typically the training corpus sizes.
    pub size_pool: Vec<usize>,
    /// Keep every intermediate graph.
    pub trace: bool,
}

impl SampleRun {
    pub fn from_corpus(corpus: &[CondGraph], num_graphs: usize, seed: u64) -> Self {
        SampleRun {
            seed,
            num_graphs,
            size_pool: corpus.iter().map(CondGraph::n).collect(),
            trace: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.num_graphs == 0 {
            return Err(Error::InvalidParameter("num_graphs must be >= 1".into()));
        }
        if self.size_pool.is_empty() {
            return Err(Error::Empty("node-count pool".into()));
        }
        if self.size_pool.contains(&0) {
            return Err(Error::InvalidParameter("node counts must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuidanceOptions {
    pub gamma: f64,
    /// Apply the inner classifier only when the outer one fires.
    pub hard_gate: bool,
    /// Also reweight the final reconstruction draw.
    pub guide_reconstruction: bool,
}

impl Default for GuidanceOptions {
    fn default() -> Self {
        GuidanceOptions {
            gamma: 1.0,
            hard_gate: false,
            guide_reconstruction: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutput {
    pub graphs: Vec<CondGraph>,
    /// Per graph, the states `G_T, ..., G_1, G_0` when tracing was requested.
    pub traces: Option<Vec<Vec<CondGraph>>>,
}

fn mix(step_flip: f64, prev_flip: f64, x_t: bool, p_clean: f64) -> f64 {
    let step = TransitionKernel::new(step_flip);
    let prev = TransitionKernel::new(prev_flip);
    posterior_one(&step, &prev, x_t, true) * p_clean + posterior_one(&step, &prev, x_t, false) * (1.0 - p_clean)
}

/// `P(x_{t-1} = 1)` for every node's bit of condition `c`. Only reads that
/// condition's bits.
pub fn reverse_node_step(
    pred: &CleanPrediction,
    schedule: &NoiseSchedule,
    g: &NoisyGraph,
    c: Condition,
) -> Result<Vec<f64>> {
    check_step(schedule, g.t)?;
    let step = schedule.step_kernel(g.t)?.flip;
    let prev = schedule.cumulative_kernel(g.t - 1)?.flip;
    let p_hat = match c {
        Condition::C1 => &pred.px1,
        Condition::C2 => &pred.px2,
    };
    Ok(g
        .graph
        .x(c)
        .iter()
        .zip(p_hat)
        .map(|(&x, &p)| mix(step, prev, x, p))
        .collect())
}

/// Row-major `n x n` symmetric matrix of `P(e_{t-1} = 1)`; the diagonal is 0.
pub fn reverse_edge_step(pred: &CleanPrediction, schedule: &NoiseSchedule, g: &NoisyGraph) -> Result<Vec<f64>> {
    check_step(schedule, g.t)?;
    let step = schedule.step_kernel(g.t)?.flip;
    let prev = schedule.cumulative_kernel(g.t - 1)?.flip;
    let n = g.graph.n();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let p = mix(step, prev, g.graph.has_edge(i, j), pred.edge(i, j));
            out[i * n + j] = p;
            out[j * n + i] = p;
        }
    }
    Ok(out)
}

fn check_step(schedule: &NoiseSchedule, t: usize) -> Result<()> {
    if t < 2 || t > schedule.steps() {
        return Err(Error::StepOutOfRange {
            t,
            max: schedule.steps(),
        });
    }
    Ok(())
}

/// Bernoulli parameters of one step, in draw order.
struct StepParams {
    x1: Vec<f64>,
    x2: Vec<f64>,
    /// Upper triangle, lexicographic.
    edges: Vec<f64>,
}

impl StepParams {
    fn guided(mut self, r: &GuidanceRatios, gamma: f64) -> Self {
        for (p, &w) in self.x1.iter_mut().zip(&r.x1) {
            *p = guide_bernoulli(*p, w, gamma);
        }
        for (p, &w) in self.x2.iter_mut().zip(&r.x2) {
            *p = guide_bernoulli(*p, w, gamma);
        }
        for (p, &w) in self.edges.iter_mut().zip(&r.edges) {
            *p = guide_bernoulli(*p, w, gamma);
        }
        self
    }

    fn draw(&self, n: usize, rng: &mut ChaCha8Rng) -> CondGraph {
        let mut g = CondGraph::empty(n);
        for (i, &p) in self.x1.iter().enumerate() {
            g.set_x(Condition::C1, i, rng.gen::<f64>() < p);
        }
        for (i, &p) in self.x2.iter().enumerate() {
            g.set_x(Condition::C2, i, rng.gen::<f64>() < p);
        }
        let mut k = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                g.set_edge(i, j, rng.gen::<f64>() < self.edges[k]);
                k += 1;
            }
        }
        g
    }
}

fn upper_triangle(full: &[f64], n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        out.extend(((i + 1)..n).map(|j| full[i * n + j]));
    }
    out
}

/// Samples `x1`, `x2` and the edges directly from the clean prediction.
pub fn reconstruction_step(pred: &CleanPrediction, rng: &mut ChaCha8Rng) -> CondGraph {
    let n = pred.n();
    StepParams {
        x1: pred.px1.clone(),
        x2: pred.px2.clone(),
        edges: upper_triangle(&pred.pe, n),
    }
    .draw(n, rng)
}

struct Guide<'a> {
    clf: &'a GuidanceClassifiers,
    opts: GuidanceOptions,
}

fn run_chain(
    predictor: &dyn CleanPredictor,
    schedule: &NoiseSchedule,
    run: &SampleRun,
    index: usize,
    guide: Option<&Guide>,
) -> Result<(CondGraph, Vec<CondGraph>)> {
    let mut rng = seeded_rng(run.seed, index as u64);
    let n = run.size_pool[rng.gen_range(0..run.size_pool.len())];
    let pairs = n * n.saturating_sub(1) / 2;
    let mut g = StepParams {
        x1: vec![0.5; n],
        x2: vec![0.5; n],
        edges: vec![0.5; pairs],
    }
    .draw(n, &mut rng);
    let mut trace = Vec::new();
    let big_t = schedule.steps();
    for t in (1..=big_t).rev() {
        if run.trace {
            trace.push(g.clone());
        }
        let noisy = NoisyGraph { graph: g, t };
        let pred = predictor.predict_clean(&noisy)?;
        if pred.n() != n {
            return Err(Error::DimensionMismatch(format!(
                "prediction for {} nodes, graph has {n}",
                pred.n()
            )));
        }
        let mut params = if t == 1 {
            StepParams {
                x1: pred.px1.clone(),
                x2: pred.px2.clone(),
                edges: upper_triangle(&pred.pe, n),
            }
        } else {
            StepParams {
                x1: reverse_node_step(&pred, schedule, &noisy, Condition::C1)?,
                x2: reverse_node_step(&pred, schedule, &noisy, Condition::C2)?,
                edges: upper_triangle(&reverse_edge_step(&pred, schedule, &noisy)?, n),
            }
        };
        if let Some(guide) = guide {
            let active = guide.opts.gamma != 0.0 && (t > 1 || guide.opts.guide_reconstruction);
            if active {
                // The ratios score candidate values of G_{t-1}.
                let at = NoisyGraph {
                    graph: noisy.graph.clone(),
                    t: (t - 1).max(1),
                };
                let r = classifier_ratios(guide.clf, &at, guide.opts.hard_gate);
                params = params.guided(&r, guide.opts.gamma);
            }
        }
        g = params.draw(n, &mut rng);
    }
    if run.trace {
        trace.push(g.clone());
    }
    Ok((g, trace))
}

fn run_all(
    predictor: &dyn CleanPredictor,
    schedule: &NoiseSchedule,
    run: &SampleRun,
    guide: Option<&Guide>,
) -> Result<SampleOutput> {
    run.validate()?;
    let chains: Vec<(CondGraph, Vec<CondGraph>)> = (0..run.num_graphs)
        .into_par_iter()
        .map(|k| run_chain(predictor, schedule, run, k, guide))
        .collect::<Result<_>>()?;
    let (graphs, traces): (Vec<_>, Vec<_>) = chains.into_iter().unzip();
    Ok(SampleOutput {
        graphs,
        traces: run.trace.then_some(traces),
    })
}

/// Starts every chain from uniform bits and runs `t = T..1`.
pub fn sample_unconditional(
    predictor: &dyn CleanPredictor,
    schedule: &NoiseSchedule,
    run: &SampleRun,
) -> Result<SampleOutput> {
    run_all(predictor, schedule, run, None)
}

/// As [`sample_unconditional`] with every Bernoulli parameter passed through
/// [`guide_bernoulli`] using the classifier ratios.
pub fn sample_conditional(
    predictor: &dyn CleanPredictor,
    classifiers: &GuidanceClassifiers,
    schedule: &NoiseSchedule,
    run: &SampleRun,
    opts: GuidanceOptions,
) -> Result<SampleOutput> {
    if !opts.gamma.is_finite() || opts.gamma < 0.0 {
        return Err(Error::InvalidParameter(format!("gamma = {} must be finite and >= 0", opts.gamma)));
    }
    let guide = Guide { clf: classifiers, opts };
    run_all(predictor, schedule, run, Some(&guide))
}
