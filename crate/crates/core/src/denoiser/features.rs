//! Structural and spectral features of a noisy graph.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::forward::{contagion_signal, ContagionParam, NoisyGraph};
use crate::graph::{CondGraph, Condition, MAX_NODES};

/// Per-node columns: x1, x2, normalized degree, clustering, contagion
/// signal for c1, contagion signal for c2.
pub const NODE_FEATS: usize = 6;
/// Graph columns: density, two largest normalized-Laplacian eigenvalues,
/// sin and cos of `2 pi t / T`, and `t / T`.
pub const GRAPH_FEATS: usize = 6;

pub const COL_X1: usize = 0;
pub const COL_X2: usize = 1;
pub const COL_DEGREE: usize = 2;
pub const COL_CLUSTERING: usize = 3;
pub const COL_CONT1: usize = 4;
pub const COL_CONT2: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    /// `n x NODE_FEATS`.
    pub node_feats: DMatrix<f64>,
    pub graph_feats: [f64; GRAPH_FEATS],
}

/// The part of the features that depends on the edges only.
#[derive(Debug, Clone, PartialEq)]
pub struct Structure {
    pub degree: Vec<f64>,
    pub clustering: Vec<f64>,
    pub density: f64,
    pub top_eigenvalues: [f64; 2],
}

impl Structure {
    pub fn of(g: &CondGraph) -> Self {
        let n = g.n();
        let denom = n.saturating_sub(1).max(1) as f64;
        Structure {
            degree: (0..n).map(|i| g.degree(i) as f64 / denom).collect(),
            clustering: g.clustering_coefficients(),
            density: g.density(),
            top_eigenvalues: top_laplacian_eigenvalues(g),
        }
    }
}

/// Two largest eigenvalues of `I - D^{-1/2} A D^{-1/2}`, where isolated
/// nodes get an all-zero row. Missing values are padded with 0.
pub fn top_laplacian_eigenvalues(g: &CondGraph) -> [f64; 2] {
    let n = g.n();
    if n == 0 || g.edge_count() == 0 {
        return [0.0, 0.0];
    }
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let d = g.degree(i);
            if d == 0 {
                0.0
            } else {
                1.0 / (d as f64).sqrt()
            }
        })
        .collect();
    let lap = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            if inv_sqrt[i] > 0.0 {
                1.0
            } else {
                0.0
            }
        } else if g.has_edge(i, j) {
            -inv_sqrt[i] * inv_sqrt[j]
        } else {
            0.0
        }
    });
    let mut eig: Vec<f64> = SymmetricEigen::new(lap).eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    [eig[0], eig.get(1).copied().unwrap_or(0.0)]
}

pub fn time_features(t: usize, total_steps: usize) -> [f64; 3] {
    let frac = t as f64 / total_steps.max(1) as f64;
    let angle = 2.0 * std::f64::consts::PI * frac;
    [angle.sin(), angle.cos(), frac]
}

pub fn extract_features(g: &NoisyGraph, total_steps: usize, contagion: ContagionParam) -> FeatureTensor {
    features_with_structure(&g.graph, &Structure::of(&g.graph), g.t, total_steps, contagion)
}

pub fn features_with_structure(
    g: &CondGraph,
    s: &Structure,
    t: usize,
    total_steps: usize,
    contagion: ContagionParam,
) -> FeatureTensor {
    let n = g.n();
    let cont1 = contagion_signal(g, Condition::C1, contagion);
    let cont2 = contagion_signal(g, Condition::C2, contagion);
    let node_feats = DMatrix::from_fn(n, NODE_FEATS, |i, c| match c {
        COL_X1 => g.x1()[i] as u8 as f64,
        COL_X2 => g.x2()[i] as u8 as f64,
        COL_DEGREE => s.degree[i],
        COL_CLUSTERING => s.clustering[i],
        COL_CONT1 => cont1[i],
        _ => cont2[i],
    });
    let [sin, cos, frac] = time_features(t, total_steps);
    FeatureTensor {
        node_feats,
        graph_feats: [s.density, s.top_eigenvalues[0], s.top_eigenvalues[1], sin, cos, frac],
    }
}

/// Graph-level summary used by the guidance classifiers: node-feature means,
/// the fraction of dual-satisfying nodes, graph features and relative size.
pub const POOLED_FEATS: usize = NODE_FEATS + 1 + GRAPH_FEATS + 1;

pub fn pooled(feats: &FeatureTensor) -> [f64; POOLED_FEATS] {
    let n = feats.node_feats.nrows();
    let mut out = [0.0; POOLED_FEATS];
    if n > 0 {
        for c in 0..NODE_FEATS {
            out[c] = feats.node_feats.column(c).sum() / n as f64;
        }
        let both = (0..n)
            .filter(|&i| feats.node_feats[(i, COL_X1)] > 0.5 && feats.node_feats[(i, COL_X2)] > 0.5)
            .count();
        out[NODE_FEATS] = both as f64 / n as f64;
    }
    out[NODE_FEATS + 1..NODE_FEATS + 1 + GRAPH_FEATS].copy_from_slice(&feats.graph_feats);
    out[POOLED_FEATS - 1] = n as f64 / MAX_NODES as f64;
    out
}
