//! Synthetic corpora with planted homophily and correlated conditions, and
//! ego-network extraction from large graphs.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{condition_correlation, CondGraph, MAX_NODES};
use crate::seeded_rng;

/// Largest allowed gap between the measured and the target phi.
pub const PHI_TOLERANCE: f64 = 0.1;
/// Number of corpus draws before giving up on the phi target.
pub const MAX_ATTEMPTS: u64 = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub num_graphs: usize,
    pub n_min: usize,
    pub n_max: usize,
    /// Target phi coefficient between the two condition bits of a node.
    pub rho_target: f64,
    /// Edge probability for pairs that agree on both condition bits.
    pub p_in: f64,
    /// Edge probability for all other pairs.
    pub p_out: f64,
    /// Marginal probability that a node satisfies a condition.
    pub base_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_graphs: 200,
            n_min: 6,
            n_max: 12,
            rho_target: 0.2,
            p_in: 0.6,
            p_out: 0.1,
            base_rate: 0.5,
            seed: 0,
        }
    }
}

/// Cell probabilities `[p11, p10, p01, p00]` of the node-condition table.
pub fn joint_table(base_rate: f64, rho: f64) -> Result<[f64; 4]> {
    let b = base_rate;
    let p11 = b * b + rho * b * (1.0 - b);
    let p10 = b - p11;
    let p00 = 1.0 - 2.0 * b + p11;
    // Tolerate rounding just below zero.
    if [p11, p10, p00].iter().any(|p| *p < -1e-12) {
        return Err(Error::InvalidParameter(format!(
            "correlation {rho} is not reachable with base rate {b}"
        )));
    }
    Ok([p11.max(0.0), p10.max(0.0), p10.max(0.0), p00.max(0.0)])
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.num_graphs == 0 {
            return bad("num_graphs must be >= 1".into());
        }
        if self.n_min == 0 || self.n_min > self.n_max || self.n_max > MAX_NODES {
            return bad(format!(
                "need 1 <= n_min <= n_max <= {MAX_NODES}, got {}..{}",
                self.n_min, self.n_max
            ));
        }
        if !(self.rho_target > -1.0 && self.rho_target < 1.0) {
            return bad(format!("rho_target {} outside (-1, 1)", self.rho_target));
        }
        for (name, p) in [("p_in", self.p_in), ("p_out", self.p_out)] {
            if !(p > 0.0 && p < 1.0) {
                return bad(format!("{name} = {p} outside (0, 1)"));
            }
        }
        if self.p_in < self.p_out {
            return bad(format!("p_in {} below p_out {}", self.p_in, self.p_out));
        }
        if !(self.base_rate > 0.0 && self.base_rate <= 1.0) {
            return bad(format!("base_rate {} outside (0, 1]", self.base_rate));
        }
        joint_table(self.base_rate, self.rho_target).map(|_| ())
    }
}

fn draw_graph<R: Rng>(cfg: &SynthConfig, table: &[f64; 4], rng: &mut R) -> CondGraph {
    let n = rng.gen_range(cfg.n_min..=cfg.n_max);
    let mut x1 = Vec::with_capacity(n);
    let mut x2 = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.gen();
        let (a, b) = if u < table[0] {
            (true, true)
        } else if u < table[0] + table[1] {
            (true, false)
        } else if u < table[0] + table[1] + table[2] {
            (false, true)
        } else {
            (false, false)
        };
        x1.push(a);
        x2.push(b);
    }
    let mut g = CondGraph::from_edges(n, &[], x1, x2).expect("no edges yet");
    for i in 0..n {
        for j in (i + 1)..n {
            let agree = g.x1()[i] == g.x1()[j] && g.x2()[i] == g.x2()[j];
            let p = if agree { cfg.p_in } else { cfg.p_out };
            g.set_edge(i, j, rng.gen::<f64>() < p);
        }
    }
    g
}

/// Draws a corpus, redrawing until the measured phi is within
/// [`PHI_TOLERANCE`] of the target. Graph `k` of attempt `a` uses the random
/// stream `(a << 32) | k`.
pub fn generate_corpus(cfg: &SynthConfig) -> Result<Vec<CondGraph>> {
    cfg.validate()?;
    let table = joint_table(cfg.base_rate, cfg.rho_target)?;
    let mut last_phi = f64::NAN;
    for attempt in 0..MAX_ATTEMPTS {
        let corpus: Vec<CondGraph> = (0..cfg.num_graphs)
            .into_par_iter()
            .map(|k| draw_graph(cfg, &table, &mut seeded_rng(cfg.seed, (attempt << 32) | k as u64)))
            .collect();
        match condition_correlation(&corpus) {
            Ok(phi) if (phi - cfg.rho_target).abs() <= PHI_TOLERANCE => return Ok(corpus),
            Ok(phi) => last_phi = phi,
            // A constant condition (base_rate = 1) has no phi to check.
            Err(Error::UndefinedCorrelation(_)) if cfg.base_rate >= 1.0 => return Ok(corpus),
            Err(e) => return Err(e),
        }
    }
    Err(Error::InvalidParameter(format!(
        "measured phi {last_phi:.3} missed target {} after {MAX_ATTEMPTS} draws",
        cfg.rho_target
    )))
}

/// The subgraph induced by each node and its neighbors, in ego order. Ego
/// nets with more than `max_n` nodes are dropped. Nodes keep their relative
/// order from `g`.
pub fn extract_ego_nets(g: &CondGraph, max_n: usize) -> Vec<CondGraph> {
    (0..g.n())
        .filter_map(|ego| {
            if g.degree(ego) + 1 > max_n {
                return None;
            }
            let mut nodes: Vec<usize> = g.neighbors(ego).collect();
            nodes.push(ego);
            nodes.sort_unstable();
            Some(g.induced_subgraph(&nodes))
        })
        .collect()
}
