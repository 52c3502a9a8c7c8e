//! Scores a generated set against a reference set.
//!
//! All structural statistics are taken on each graph's subgraph induced by
//! the nodes that satisfy both conditions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::CondGraph;
use crate::guidance::majority_label;

pub const HIST_BINS: usize = 10;
/// Lower bound on the kernel bandwidth.
pub const SIGMA_FLOOR: f64 = 1e-6;

/// Strictly more than half of the nodes satisfy c1 and strictly more than
/// half satisfy c2.
pub fn is_valid(g: &CondGraph) -> bool {
    let l = majority_label(g);
    l.label_c1 && l.label_c2
}

/// Strictly more than half of the nodes satisfy both conditions at once.
pub fn has_dual_majority(g: &CondGraph) -> bool {
    2 * g.dual_count() > g.n()
}

/// Fraction of graphs for which [`is_valid`] holds.
pub fn validity(generated: &[CondGraph]) -> Result<f64> {
    if generated.is_empty() {
        return Err(Error::Empty("generated graph list".into()));
    }
    let ok = generated.iter().filter(|g| is_valid(g)).count();
    Ok(ok as f64 / generated.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeErrors {
    pub nodes: f64,
    pub edges: f64,
    pub density: f64,
}

/// Means of node count (over all graphs) and of edge count and density (over
/// graphs whose dual subgraph is nonempty; 0 if there are none).
fn dual_means(graphs: &[CondGraph]) -> [f64; 3] {
    let subs: Vec<CondGraph> = graphs.iter().map(CondGraph::induced_dual_subgraph).collect();
    let nodes = subs.iter().map(|s| s.n() as f64).sum::<f64>() / subs.len() as f64;
    let nonempty: Vec<&CondGraph> = subs.iter().filter(|s| s.n() > 0).collect();
    if nonempty.is_empty() {
        return [nodes, 0.0, 0.0];
    }
    let k = nonempty.len() as f64;
    let edges = nonempty.iter().map(|s| s.edge_count() as f64).sum::<f64>() / k;
    let density = nonempty.iter().map(|s| s.density()).sum::<f64>() / k;
    [nodes, edges, density]
}

/// `|mean_gen - mean_ref| / mean_ref` for node count, edge count and density.
pub fn relative_error_ratios(reference: &[CondGraph], generated: &[CondGraph]) -> Result<RelativeErrors> {
    if reference.is_empty() {
        return Err(Error::Empty("reference graph list".into()));
    }
    if generated.is_empty() {
        return Err(Error::Empty("generated graph list".into()));
    }
    let r = dual_means(reference);
    let g = dual_means(generated);
    let names = ["nodes", "edges", "density"];
    let mut out = [0.0; 3];
    for k in 0..3 {
        if r[k] == 0.0 {
            return Err(Error::UndefinedRatio(names[k]));
        }
        out[k] = (g[k] - r[k]).abs() / r[k];
    }
    Ok(RelativeErrors {
        nodes: out[0],
        edges: out[1],
        density: out[2],
    })
}

/// L1-normalized histogram of clustering coefficients on the dual subgraph;
/// `None` if that subgraph is empty. Bins are `[k/10, (k+1)/10)` with the
/// last one closed.
pub fn clustering_histogram(g: &CondGraph) -> Option<[f64; HIST_BINS]> {
    let sub = g.induced_dual_subgraph();
    if sub.n() == 0 {
        return None;
    }
    let mut counts = [0usize; HIST_BINS];
    for c in sub.clustering_coefficients() {
        // The epsilon keeps values such as 0.3 out of the bin below.
        let bin = ((c * HIST_BINS as f64 + 1e-9).floor() as usize).min(HIST_BINS - 1);
        counts[bin] += 1;
    }
    let mut h = [0.0; HIST_BINS];
    for (o, c) in h.iter_mut().zip(counts) {
        *o = c as f64 / sub.n() as f64;
    }
    Some(h)
}

fn sq_dist(a: &[f64; HIST_BINS], b: &[f64; HIST_BINS]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// Median of the nonzero pairwise distances among all histograms, floored at
/// [`SIGMA_FLOOR`]. Skipping zero distances keeps the bandwidth unchanged
/// when graphs are duplicated.
pub fn median_bandwidth(hists: &[[f64; HIST_BINS]]) -> f64 {
    let mut d = Vec::new();
    for i in 0..hists.len() {
        for j in (i + 1)..hists.len() {
            let v = sq_dist(&hists[i], &hists[j]).sqrt();
            if v > 0.0 {
                d.push(v);
            }
        }
    }
    median(d).unwrap_or(0.0).max(SIGMA_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmdResult {
    /// Biased squared MMD, clamped at 0.
    pub mmd2: f64,
    pub sigma: f64,
    pub reference_used: usize,
    pub generated_used: usize,
}

/// Squared MMD between clustering histograms with a Gaussian kernel.
pub fn mmd_clustering_detail(reference: &[CondGraph], generated: &[CondGraph]) -> Result<MmdResult> {
    let xs: Vec<_> = reference.iter().filter_map(clustering_histogram).collect();
    let ys: Vec<_> = generated.iter().filter_map(clustering_histogram).collect();
    if xs.is_empty() {
        return Err(Error::Empty("no reference graph has dual-satisfying nodes".into()));
    }
    if ys.is_empty() {
        return Err(Error::Empty("no generated graph has dual-satisfying nodes".into()));
    }
    let all: Vec<_> = xs.iter().chain(&ys).copied().collect();
    let sigma = median_bandwidth(&all);
    let k = |a: &[f64; HIST_BINS], b: &[f64; HIST_BINS]| (-sq_dist(a, b) / (2.0 * sigma * sigma)).exp();
    let mean_k = |a: &[[f64; HIST_BINS]], b: &[[f64; HIST_BINS]]| {
        let s: f64 = a.iter().map(|u| b.iter().map(|v| k(u, v)).sum::<f64>()).sum();
        s / (a.len() * b.len()) as f64
    };
    let mmd2 = (mean_k(&xs, &xs) + mean_k(&ys, &ys) - 2.0 * mean_k(&xs, &ys)).max(0.0);
    Ok(MmdResult {
        mmd2,
        sigma,
        reference_used: xs.len(),
        generated_used: ys.len(),
    })
}

pub fn mmd_clustering(reference: &[CondGraph], generated: &[CondGraph]) -> Result<f64> {
    mmd_clustering_detail(reference, generated).map(|r| r.mmd2)
}

/// Fixed choices behind the reported numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSettings {
    pub validity_rule: String,
    pub histogram_bins: usize,
    pub kernel: String,
    pub bandwidth_rule: String,
    pub bandwidth: f64,
    pub estimator: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub validity: f64,
    /// Fraction of generated graphs where most nodes satisfy both conditions
    /// at once; informational.
    pub dual_majority: f64,
    pub rel_err_nodes: f64,
    pub rel_err_edges: f64,
    pub rel_err_density: f64,
    pub mmd_clustering: f64,
    pub reference_graphs: usize,
    pub generated_graphs: usize,
    pub mmd_reference_graphs: usize,
    pub mmd_generated_graphs: usize,
    pub settings: MetricSettings,
}

pub fn evaluate(reference: &[CondGraph], generated: &[CondGraph]) -> Result<EvalReport> {
    let validity = validity(generated)?;
    let rel = relative_error_ratios(reference, generated)?;
    let mmd = mmd_clustering_detail(reference, generated)?;
    let dual = generated.iter().filter(|g| has_dual_majority(g)).count() as f64 / generated.len() as f64;
    Ok(EvalReport {
        validity,
        dual_majority: dual,
        rel_err_nodes: rel.nodes,
        rel_err_edges: rel.edges,
        rel_err_density: rel.density,
        mmd_clustering: mmd.mmd2,
        reference_graphs: reference.len(),
        generated_graphs: generated.len(),
        mmd_reference_graphs: mmd.reference_used,
        mmd_generated_graphs: mmd.generated_used,
        settings: MetricSettings {
            validity_rule: "count(x1) > n/2 and count(x2) > n/2".into(),
            histogram_bins: HIST_BINS,
            kernel: "gaussian".into(),
            bandwidth_rule: "median nonzero pairwise distance, floor 1e-6".into(),
            bandwidth: mmd.sigma,
            estimator: "biased V-statistic".into(),
        },
    })
}
