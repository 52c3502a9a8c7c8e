//! Condition indication graphs: an undirected simple graph whose nodes carry
//! one satisfaction bit for each of two conditions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest graph the diffusion model is trained on or generates.
pub const MAX_NODES: usize = 100;

/// One of the two exogenous conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    C1,
    C2,
}

impl Condition {
    pub const BOTH: [Condition; 2] = [Condition::C1, Condition::C2];

    pub fn other(self) -> Condition {
        match self {
            Condition::C1 => Condition::C2,
            Condition::C2 => Condition::C1,
        }
    }
}

/// Attributed graph with a dense symmetric adjacency matrix.
///
/// `adj` is row-major `n * n`; the diagonal is always false.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CondGraph {
    n: usize,
    adj: Vec<bool>,
    x1: Vec<bool>,
    x2: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub node_count: usize,
    pub edge_count: usize,
    pub density: f64,
    pub clustering: Vec<f64>,
}

impl CondGraph {
    /// Graph with `n` nodes, no edges and no satisfied conditions.
    pub fn empty(n: usize) -> Self {
        CondGraph {
            n,
            adj: vec![false; n * n],
            x1: vec![false; n],
            x2: vec![false; n],
        }
    }

    /// Builds a graph from an edge list. Duplicate edges (in either
    /// orientation) collapse to one; self-loops and out-of-range endpoints
    /// are rejected.
    pub fn from_edges(
        n: usize,
        edges: &[(usize, usize)],
        x1: Vec<bool>,
        x2: Vec<bool>,
    ) -> Result<Self> {
        check_len(n, &x1, &x2)?;
        let mut g = CondGraph {
            n,
            adj: vec![false; n * n],
            x1,
            x2,
        };
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({u}, {v}) out of range for {n} nodes"
                )));
            }
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop at node {u}")));
            }
            g.set_edge(u, v, true);
        }
        Ok(g)
    }

    /// Builds a graph from a row-major adjacency matrix, validating symmetry
    /// and the empty diagonal.
    pub fn from_adjacency(n: usize, adj: Vec<bool>, x1: Vec<bool>, x2: Vec<bool>) -> Result<Self> {
        check_len(n, &x1, &x2)?;
        if adj.len() != n * n {
            return Err(Error::InvalidGraph(format!(
                "adjacency has {} entries, expected {}",
                adj.len(),
                n * n
            )));
        }
        for i in 0..n {
            if adj[i * n + i] {
                return Err(Error::InvalidGraph(format!("self-loop at node {i}")));
            }
            for j in (i + 1)..n {
                if adj[i * n + j] != adj[j * n + i] {
                    return Err(Error::InvalidGraph(format!("asymmetric entry ({i}, {j})")));
                }
            }
        }
        Ok(CondGraph { n, adj, x1, x2 })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.n + j]
    }

    /// Sets or clears the undirected edge `{i, j}`. Panics on `i == j`.
    pub fn set_edge(&mut self, i: usize, j: usize, present: bool) {
        assert_ne!(i, j, "self-loops are not representable");
        self.adj[i * self.n + j] = present;
        self.adj[j * self.n + i] = present;
    }

    pub fn x(&self, c: Condition) -> &[bool] {
        match c {
            Condition::C1 => &self.x1,
            Condition::C2 => &self.x2,
        }
    }

    pub fn x1(&self) -> &[bool] {
        &self.x1
    }

    pub fn x2(&self) -> &[bool] {
        &self.x2
    }

    pub fn set_x(&mut self, c: Condition, i: usize, value: bool) {
        match c {
            Condition::C1 => self.x1[i] = value,
            Condition::C2 => self.x2[i] = value,
        }
    }

    pub fn adjacency(&self) -> &[bool] {
        &self.adj
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let row = &self.adj[i * self.n..(i + 1) * self.n];
        row.iter()
            .enumerate()
            .filter_map(|(j, &e)| if e { Some(j) } else { None })
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i * self.n..(i + 1) * self.n]
            .iter()
            .filter(|&&e| e)
            .count()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().filter(|&&e| e).count() / 2
    }

    /// Edges as `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if self.has_edge(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn pair_count(&self) -> usize {
        self.n * self.n.saturating_sub(1) / 2
    }

    pub fn density(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.edge_count() as f64 / self.pair_count() as f64
        }
    }

    /// Number of nodes satisfying both conditions.
    pub fn dual_count(&self) -> usize {
        self.x1.iter().zip(&self.x2).filter(|(a, b)| **a && **b).count()
    }

    /// Subgraph induced by `nodes`, in the given order.
    pub fn induced_subgraph(&self, nodes: &[usize]) -> CondGraph {
        let m = nodes.len();
        let mut adj = vec![false; m * m];
        for (a, &u) in nodes.iter().enumerate() {
            for (b, &v) in nodes.iter().enumerate() {
                adj[a * m + b] = u != v && self.has_edge(u, v);
            }
        }
        CondGraph {
            n: m,
            adj,
            x1: nodes.iter().map(|&u| self.x1[u]).collect(),
            x2: nodes.iter().map(|&u| self.x2[u]).collect(),
        }
    }

    /// Subgraph induced by the nodes that satisfy both conditions. May be
    /// empty.
    pub fn induced_dual_subgraph(&self) -> CondGraph {
        let nodes: Vec<usize> = (0..self.n).filter(|&i| self.x1[i] && self.x2[i]).collect();
        self.induced_subgraph(&nodes)
    }

    /// Relabels nodes so that old node `i` becomes node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> CondGraph {
        assert_eq!(perm.len(), self.n);
        let n = self.n;
        let mut g = CondGraph::empty(n);
        for i in 0..n {
            g.x1[perm[i]] = self.x1[i];
            g.x2[perm[i]] = self.x2[i];
            for j in 0..n {
                g.adj[perm[i] * n + perm[j]] = self.adj[i * n + j];
            }
        }
        g
    }

    /// Local clustering coefficient per node; nodes of degree < 2 get 0.
    pub fn clustering_coefficients(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let nb: Vec<usize> = self.neighbors(i).collect();
                let d = nb.len();
                if d < 2 {
                    return 0.0;
                }
                let mut links = 0usize;
                for a in 0..d {
                    for b in (a + 1)..d {
                        if self.has_edge(nb[a], nb[b]) {
                            links += 1;
                        }
                    }
                }
                (2 * links) as f64 / (d * (d - 1)) as f64
            })
            .collect()
    }

    pub fn stats(&self) -> GraphStats {
        GraphStats {
            node_count: self.n,
            edge_count: self.edge_count(),
            density: self.density(),
            clustering: self.clustering_coefficients(),
        }
    }
}

fn check_len(n: usize, x1: &[bool], x2: &[bool]) -> Result<()> {
    if x1.len() != n || x2.len() != n {
        return Err(Error::InvalidGraph(format!(
            "condition vectors have lengths {} and {}, expected {n}",
            x1.len(),
            x2.len()
        )));
    }
    Ok(())
}

/// Phi coefficient of the two condition bits pooled over every node of every
/// graph in `corpus`.
pub fn condition_correlation(corpus: &[CondGraph]) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::Empty("corpus".into()));
    }
    let mut table = [[0u64; 2]; 2];
    for g in corpus {
        for i in 0..g.n() {
            table[g.x1[i] as usize][g.x2[i] as usize] += 1;
        }
    }
    phi_from_table(table)
}

/// Phi coefficient from a 2x2 contingency table indexed `[x1][x2]`.
pub fn phi_from_table(table: [[u64; 2]; 2]) -> Result<f64> {
    let n11 = table[1][1] as f64;
    let n10 = table[1][0] as f64;
    let n01 = table[0][1] as f64;
    let n00 = table[0][0] as f64;
    let total = n11 + n10 + n01 + n00;
    if total < 2.0 {
        return Err(Error::UndefinedCorrelation("fewer than two nodes".into()));
    }
    let r1 = n11 + n10;
    let r0 = n01 + n00;
    let c1 = n11 + n01;
    let c0 = n10 + n00;
    if r1 == 0.0 || r0 == 0.0 {
        return Err(Error::UndefinedCorrelation("condition c1 is constant".into()));
    }
    if c1 == 0.0 || c0 == 0.0 {
        return Err(Error::UndefinedCorrelation("condition c2 is constant".into()));
    }
    Ok((n11 * n00 - n10 * n01) / (r1 * r0 * c1 * c0).sqrt())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    fn plain(n: usize, edges: &[(usize, usize)]) -> CondGraph {
        CondGraph::from_edges(n, edges, vec![false; n], vec![false; n]).unwrap()
    }

    #[test]
    fn clustering_small_graphs() {
        assert_eq!(plain(3, &[(0, 1), (1, 2), (0, 2)]).clustering_coefficients(), vec![1.0; 3]);
        assert_eq!(plain(3, &[(0, 1), (1, 2)]).clustering_coefficients(), vec![0.0; 3]);
        // K4 without edge {0,1}: nodes 0 and 1 have degree 2, nodes 2 and 3
        // have degree 3.
        let g = plain(4, &[(0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        let c = g.clustering_coefficients();
        let oracle = brute_force_clustering(&g);
        assert_eq!(oracle, vec![1.0, 1.0, 2.0 / 3.0, 2.0 / 3.0]);
        for i in 0..4 {
            assert!((c[i] - oracle[i]).abs() < 1e-15);
        }
    }

    /// Closed triangles through each node over all ordered neighbor pairs.
    fn brute_force_clustering(g: &CondGraph) -> Vec<f64> {
        let n = g.n();
        (0..n)
            .map(|i| {
                let (mut closed, mut open) = (0usize, 0usize);
                for a in 0..n {
                    for b in 0..n {
                        if a != b && a != i && b != i && g.has_edge(i, a) && g.has_edge(i, b) {
                            open += 1;
                            closed += g.has_edge(a, b) as usize;
                        }
                    }
                }
                if open == 0 {
                    0.0
                } else {
                    closed as f64 / open as f64
                }
            })
            .collect()
    }

    #[test]
    fn induced_dual_on_cycle() {
        let g = CondGraph::from_edges(
            4,
            &[(0, 1), (1, 2), (2, 3), (3, 0)],
            vec![true, true, false, true],
            vec![true, true, true, false],
        )
        .unwrap();
        let sub = g.induced_dual_subgraph();
        assert_eq!(sub.n(), 2);
        assert_eq!(sub.edges(), vec![(0, 1)]);

        let none = plain(4, &[(0, 1)]).induced_dual_subgraph();
        assert!(none.is_empty());

        let all = CondGraph::from_edges(3, &[(0, 1)], vec![true; 3], vec![true; 3]).unwrap();
        assert_eq!(all.induced_dual_subgraph(), all);
    }

    #[test]
    fn stats_examples() {
        let k3 = plain(3, &[(0, 1), (1, 2), (0, 2)]).stats();
        assert_eq!((k3.node_count, k3.edge_count, k3.density), (3, 3, 1.0));
        assert_eq!(CondGraph::empty(5).stats().density, 0.0);
        let c4 = plain(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).stats();
        assert_eq!(c4.edge_count, 4);
        assert_eq!(c4.density, 4.0 / 6.0);
        assert_eq!(CondGraph::empty(1).density(), 0.0);
    }

    #[test]
    fn correlation_examples() {
        let g = CondGraph::from_edges(4, &[], vec![true, false, true, false], vec![true, false, true, false])
            .unwrap();
        assert_eq!(condition_correlation(std::slice::from_ref(&g)).unwrap(), 1.0);
        let h = CondGraph::from_edges(4, &[], vec![true, false, true, false], vec![false, true, false, true])
            .unwrap();
        assert_eq!(condition_correlation(&[h]).unwrap(), -1.0);
        // n11 = 2, n10 = 1, n01 = 1, n00 = 2 split over two graphs.
        let a = CondGraph::from_edges(3, &[], vec![true, true, true], vec![true, true, false]).unwrap();
        let b = CondGraph::from_edges(3, &[], vec![false, false, false], vec![true, false, false]).unwrap();
        let phi = condition_correlation(&[a, b]).unwrap();
        assert!((phi - 1.0 / 3.0).abs() < 1e-15);

        let constant = CondGraph::from_edges(2, &[], vec![true, true], vec![true, false]).unwrap();
        assert!(matches!(
            condition_correlation(&[constant]),
            Err(Error::UndefinedCorrelation(_))
        ));
        assert!(condition_correlation(&[]).is_err());
    }

    #[test]
    fn rejects_invalid_input() {
        assert!(CondGraph::from_edges(2, &[(0, 0)], vec![false; 2], vec![false; 2]).is_err());
        assert!(CondGraph::from_edges(2, &[(0, 2)], vec![false; 2], vec![false; 2]).is_err());
        assert!(CondGraph::from_edges(2, &[], vec![false; 3], vec![false; 2]).is_err());
        let asym = vec![false, true, false, false];
        assert!(CondGraph::from_adjacency(2, asym, vec![false; 2], vec![false; 2]).is_err());
        let dup = CondGraph::from_edges(2, &[(0, 1), (1, 0)], vec![false; 2], vec![false; 2]).unwrap();
        assert_eq!(dup.edge_count(), 1);
    }

    pub(crate) fn arb_graph(max_n: usize) -> impl Strategy<Value = CondGraph> {
        (1..=max_n).prop_flat_map(|n| {
            (
                Just(n),
                proptest::collection::vec(any::<bool>(), n * (n - 1) / 2),
                proptest::collection::vec(any::<bool>(), n),
                proptest::collection::vec(any::<bool>(), n),
            )
                .prop_map(|(n, upper, x1, x2)| {
                    let mut g = CondGraph::from_edges(n, &[], x1, x2).unwrap();
                    let mut k = 0;
                    for i in 0..n {
                        for j in (i + 1)..n {
                            g.set_edge(i, j, upper[k]);
                            k += 1;
                        }
                    }
                    g
                })
        })
    }

    fn arb_graph_and_perm(max_n: usize) -> impl Strategy<Value = (CondGraph, Vec<usize>)> {
        arb_graph(max_n).prop_flat_map(|g| {
            let n = g.n();
            (Just(g), Just((0..n).collect::<Vec<_>>()).prop_shuffle())
        })
    }

    proptest! {
        #[test]
        fn induced_dual_is_idempotent(g in arb_graph(12)) {
            let once = g.induced_dual_subgraph();
            prop_assert_eq!(once.induced_dual_subgraph(), once);
        }

        #[test]
        fn clustering_is_relabeling_equivariant((g, perm) in arb_graph_and_perm(10)) {
            let c = g.clustering_coefficients();
            let cp = g.permuted(&perm).clustering_coefficients();
            for i in 0..g.n() {
                prop_assert_eq!(c[i], cp[perm[i]]);
                prop_assert!((0.0..=1.0).contains(&c[i]));
            }
        }

        #[test]
        fn correlation_symmetric_and_complement_invariant(gs in proptest::collection::vec(arb_graph(8), 1..4)) {
            if let Ok(phi) = condition_correlation(&gs) {
                let swapped: Vec<CondGraph> = gs.iter().map(|g| {
                    CondGraph::from_adjacency(g.n(), g.adjacency().to_vec(), g.x2().to_vec(), g.x1().to_vec()).unwrap()
                }).collect();
                let flipped: Vec<CondGraph> = gs.iter().map(|g| {
                    CondGraph::from_adjacency(
                        g.n(),
                        g.adjacency().to_vec(),
                        g.x1().iter().map(|b| !b).collect(),
                        g.x2().iter().map(|b| !b).collect(),
                    ).unwrap()
                }).collect();
                prop_assert!((condition_correlation(&swapped).unwrap() - phi).abs() < 1e-12);
                prop_assert!((condition_correlation(&flipped).unwrap() - phi).abs() < 1e-12);
                prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&phi));
            }
        }
    }
}
