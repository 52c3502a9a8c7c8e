//! Forward corruption of training graphs and the node/edge dependency
//! factors (contagion and homophily).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CondGraph, Condition};
use crate::schedule::NoiseSchedule;
use crate::seeded_rng;

/// A graph state at diffusion step `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyGraph {
    pub graph: CondGraph,
    pub t: usize,
}

/// Flips every condition bit and every upper-triangle adjacency bit
/// independently with the cumulative flip probability of step `t`.
pub fn corrupt(g: &CondGraph, schedule: &NoiseSchedule, t: usize, seed: u64) -> Result<NoisyGraph> {
    let mut rng = seeded_rng(seed, 0);
    corrupt_with_rng(g, schedule, t, &mut rng)
}

pub fn corrupt_with_rng<R: Rng + ?Sized>(
    g: &CondGraph,
    schedule: &NoiseSchedule,
    t: usize,
    rng: &mut R,
) -> Result<NoisyGraph> {
    let flip = schedule.cumulative_kernel(t)?.flip;
    Ok(NoisyGraph {
        graph: flip_bits(g, flip, rng),
        t,
    })
}

/// Independent symmetric flips with probability `flip`. Draw order: x1 bits,
/// x2 bits, then pairs `(i, j)`, `i < j`, lexicographically.
pub fn flip_bits<R: Rng + ?Sized>(g: &CondGraph, flip: f64, rng: &mut R) -> CondGraph {
    let mut out = g.clone();
    let n = g.n();
    for c in Condition::BOTH {
        for i in 0..n {
            if rng.gen::<f64>() < flip {
                out.set_x(c, i, !g.x(c)[i]);
            }
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.gen::<f64>() < flip {
                out.set_edge(i, j, !g.has_edge(i, j));
            }
        }
    }
    out
}

/// Probability that an edge endpoint copies its neighbor's condition bit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContagionParam(f64);

impl ContagionParam {
    pub fn new(p: f64) -> Result<Self> {
        if p > 0.5 && p < 1.0 {
            Ok(ContagionParam(p))
        } else {
            Err(Error::InvalidParameter(format!("contagion p = {p} outside (1/2, 1)")))
        }
    }

    pub fn p(&self) -> f64 {
        self.0
    }
}

impl Default for ContagionParam {
    fn default() -> Self {
        ContagionParam(0.8)
    }
}

/// `P(x_m = 1 | x_n = neighbor_bit, e_mn = edge_present)`.
///
/// With an edge the endpoint agrees with its neighbor with probability `p`;
/// without one the neighbor carries no information.
pub fn contagion_conditional(param: ContagionParam, neighbor_bit: bool, edge_present: bool) -> f64 {
    if !edge_present {
        0.5
    } else if neighbor_bit {
        param.p()
    } else {
        1.0 - param.p()
    }
}

/// `q(e_mn = 1 | x_m)` obtained by marginalizing the agreement indicator
/// kernel over the other endpoint, where `neighbor_dist = q(x_n = 1 | x_m)`.
pub fn homophily_edge_prob(bit_m: bool, neighbor_dist: f64) -> f64 {
    if bit_m {
        neighbor_dist
    } else {
        1.0 - neighbor_dist
    }
}

/// Mean contagion probability per node for condition `c`: the average of
/// [`contagion_conditional`] over the node's current neighbors, or 1/2 for an
/// isolated node. Reads only `x_c` and the edges.
pub fn contagion_signal(g: &CondGraph, c: Condition, param: ContagionParam) -> Vec<f64> {
    let x = g.x(c);
    (0..g.n())
        .map(|i| {
            let mut sum = 0.0;
            let mut deg = 0usize;
            for j in g.neighbors(i) {
                sum += contagion_conditional(param, x[j], true);
                deg += 1;
            }
            if deg == 0 {
                0.5
            } else {
                sum / deg as f64
            }
        })
        .collect()
}

/// Empirical `q(x_n = 1 | x_m)` over ordered pairs of adjacent nodes, one
/// table per condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborConditionTable {
    /// `[condition][x_m]` -> `q(x_n = 1 | x_m)`.
    pub given: [[f64; 2]; 2],
}

impl NeighborConditionTable {
    pub fn estimate(corpus: &[CondGraph]) -> Result<Self> {
        let mut counts = [[[0u64; 2]; 2]; 2];
        for g in corpus {
            for (ci, c) in Condition::BOTH.iter().enumerate() {
                let x = g.x(*c);
                for (i, j) in g.edges() {
                    counts[ci][x[i] as usize][x[j] as usize] += 1;
                    counts[ci][x[j] as usize][x[i] as usize] += 1;
                }
            }
        }
        let mut given = [[0.5; 2]; 2];
        for ci in 0..2 {
            for m in 0..2 {
                let total = counts[ci][m][0] + counts[ci][m][1];
                if total > 0 {
                    given[ci][m] = counts[ci][m][1] as f64 / total as f64;
                }
            }
        }
        if corpus.iter().all(|g| g.edge_count() == 0) {
            return Err(Error::Empty("corpus has no edges".into()));
        }
        Ok(NeighborConditionTable { given })
    }

    /// Homophily edge probability for a node with bit `bit_m` on condition `c`.
    pub fn edge_prob(&self, c: Condition, bit_m: bool) -> f64 {
        let ci = match c {
            Condition::C1 => 0,
            Condition::C2 => 1,
        };
        homophily_edge_prob(bit_m, self.given[ci][bit_m as usize])
    }

    /// Fraction of adjacent pairs agreeing on `c`, a plug-in estimate of the
    /// contagion parameter.
    pub fn agreement(&self, c: Condition, base_one: f64) -> f64 {
        base_one * self.edge_prob(c, true) + (1.0 - base_one) * self.edge_prob(c, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::ScheduleConfig;

    #[test]
    fn zero_flip_is_identity() {
        let g = CondGraph::from_edges(4, &[(0, 1), (2, 3)], vec![true, false, true, false], vec![false; 4])
            .unwrap();
        let mut rng = seeded_rng(1, 0);
        assert_eq!(flip_bits(&g, 0.0, &mut rng), g);
    }

    #[test]
    fn half_flip_is_uniform() {
        let mut rng = seeded_rng(7, 0);
        let g = CondGraph::empty(1);
        let draws = 100_000;
        let mut ones = 0usize;
        for _ in 0..draws {
            let h = flip_bits(&g, 0.5, &mut rng);
            ones += h.x1()[0] as usize;
            assert_eq!(h.edge_count(), 0);
            assert_eq!(h.n(), 1);
        }
        let rate = ones as f64 / draws as f64;
        assert!((rate - 0.5).abs() < 0.01, "rate {rate}");
    }

    #[test]
    fn corruption_is_seeded() {
        let s = NoiseSchedule::from_config(&ScheduleConfig::default()).unwrap();
        let g = CondGraph::from_edges(6, &[(0, 1), (1, 2)], vec![true; 6], vec![false; 6]).unwrap();
        let a = corrupt(&g, &s, 20, 99).unwrap();
        let b = corrupt(&g, &s, 20, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.graph.n(), 6);
        assert!(corrupt(&g, &s, 0, 1).is_err());
    }

    #[test]
    fn corruption_marginals_compose() {
        // q(x_t | x_0) must equal one step flip applied after q(x_{t-1} | x_0).
        let s = NoiseSchedule::from_config(&ScheduleConfig::default()).unwrap();
        let g = CondGraph::from_edges(2, &[(0, 1)], vec![true, false], vec![true, true]).unwrap();
        let mut rng = seeded_rng(3, 0);
        for t in [2usize, 5, 12] {
            let draws = 100_000;
            let mut direct = [0usize; 5];
            let mut chained = [0usize; 5];
            let step = s.step_kernel(t).unwrap().flip;
            for _ in 0..draws {
                let a = corrupt_with_rng(&g, &s, t, &mut rng).unwrap().graph;
                let b0 = corrupt_with_rng(&g, &s, t - 1, &mut rng).unwrap().graph;
                let b = flip_bits(&b0, step, &mut rng);
                for (k, h) in [(&a, &mut direct), (&b, &mut chained)] {
                    h[0] += k.x1()[0] as usize;
                    h[1] += k.x1()[1] as usize;
                    h[2] += k.x2()[0] as usize;
                    h[3] += k.x2()[1] as usize;
                    h[4] += k.has_edge(0, 1) as usize;
                }
            }
            for v in 0..5 {
                let d = direct[v] as f64 / draws as f64;
                let c = chained[v] as f64 / draws as f64;
                assert!((d - c).abs() < 0.01, "t={t} var={v}: {d} vs {c}");
            }
        }
    }

    #[test]
    fn contagion_values() {
        let p = ContagionParam::new(0.8).unwrap();
        assert_eq!(contagion_conditional(p, true, true), 0.8);
        assert!((contagion_conditional(p, false, true) - 0.2).abs() < 1e-15);
        assert_eq!(contagion_conditional(p, true, false), 0.5);
        assert!(ContagionParam::new(0.5).is_err());
        assert!(ContagionParam::new(1.0).is_err());
        // Normalization over x_m for fixed inputs.
        for nb in [false, true] {
            for e in [false, true] {
                let one = contagion_conditional(p, nb, e);
                assert!((one + (1.0 - one) - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn homophily_values() {
        assert_eq!(homophily_edge_prob(true, 0.7), 0.7);
        assert!((homophily_edge_prob(false, 0.7) - 0.3).abs() < 1e-15);
        assert_eq!(homophily_edge_prob(true, 1.0), 1.0);
    }

    #[test]
    fn neighbor_table_counts_adjacent_pairs() {
        // Edges: (0,1) agree on 1, (1,2) disagree.
        let g = CondGraph::from_edges(3, &[(0, 1), (1, 2)], vec![true, true, false], vec![false; 3]).unwrap();
        let t = NeighborConditionTable::estimate(std::slice::from_ref(&g)).unwrap();
        // Ordered pairs from x_m = 1: (0->1)=1, (1->0)=1, (1->2)=0  => 2/3.
        assert!((t.given[0][1] - 2.0 / 3.0).abs() < 1e-15);
        // From x_m = 0: (2->1)=1 => 1.
        assert_eq!(t.given[0][0], 1.0);
        assert_eq!(t.given[1][0], 0.0);
        let sig = contagion_signal(&g, Condition::C1, ContagionParam::default());
        assert_eq!(sig[0], 0.8);
        assert!((sig[1] - 0.5).abs() < 1e-15);
        assert_eq!(sig[2], 0.8);
        assert!(NeighborConditionTable::estimate(&[CondGraph::empty(3)]).is_err());
    }
}
