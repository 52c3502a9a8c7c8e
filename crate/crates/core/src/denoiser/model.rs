use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::features::{
    extract_features, FeatureTensor, COL_CLUSTERING, COL_CONT1, COL_CONT2, COL_DEGREE, COL_X1, COL_X2,
    GRAPH_FEATS,
};
use crate::error::{Error, Result};
use crate::forward::{ContagionParam, NoisyGraph};
use crate::graph::CondGraph;
use crate::nn::{bce, clamp_prob, init_uniform, logistic_bce, sigmoid};

/// Width of one node's trunk input: masked bits, the two masks, degree,
/// clustering, masked contagion signals, then the graph features.
pub const TRUNK_INPUT: usize = 8 + GRAPH_FEATS;

/// Extra pair inputs next to `h_i * h_j` and `h_i + h_j`: the noisy edge bit
/// and the agreement indicators for both conditions.
const PAIR_EXTRA: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoiserHyper {
    /// Message-passing rounds.
    pub rounds: usize,
    pub hidden: usize,
    pub contagion_p: f64,
    /// Number of diffusion steps the time features are normalized by.
    pub steps: usize,
}

impl Default for DenoiserHyper {
    fn default() -> Self {
        DenoiserHyper {
            rounds: 2,
            hidden: 32,
            contagion_p: 0.8,
            steps: 50,
        }
    }
}

/// Which inputs a trunk pass may see. Node heads for one condition never see
/// the other condition's bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum View {
    C1,
    C2,
    Edge,
}

impl View {
    fn masks(self) -> (f64, f64) {
        match self {
            View::C1 => (1.0, 0.0),
            View::C2 => (0.0, 1.0),
            View::Edge => (1.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Block {
    off: usize,
    rows: usize,
    cols: usize,
}

impl Block {
    fn len(&self) -> usize {
        self.rows * self.cols
    }
    fn view<'a>(&self, p: &'a [f64]) -> DMatrixView<'a, f64> {
        DMatrixView::from_slice(&p[self.off..self.off + self.len()], self.rows, self.cols)
    }
    fn view_mut<'a>(&self, p: &'a mut [f64]) -> DMatrixViewMut<'a, f64> {
        DMatrixViewMut::from_slice(&mut p[self.off..self.off + self.len()], self.rows, self.cols)
    }
    fn slice<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.off..self.off + self.len()]
    }
}

#[derive(Debug, Clone)]
struct Layout {
    w_in: Block,
    b_in: Block,
    rounds: Vec<(Block, Block, Block)>,
    head1_w: Block,
    head1_b: Block,
    head2_w: Block,
    head2_b: Block,
    pair_w: Block,
    pair_b: Block,
    out_w: Block,
    out_b: Block,
    total: usize,
}

impl Layout {
    fn new(rounds: usize, h: usize) -> Self {
        let mut off = 0;
        let mut take = |rows: usize, cols: usize| {
            let b = Block { off, rows, cols };
            off += rows * cols;
            b
        };
        let w_in = take(h, TRUNK_INPUT);
        let b_in = take(h, 1);
        let rounds = (0..rounds).map(|_| (take(h, h), take(h, h), take(h, 1))).collect();
        let head1_w = take(h, 1);
        let head1_b = take(1, 1);
        let head2_w = take(h, 1);
        let head2_b = take(1, 1);
        let pair_w = take(h, 2 * h + PAIR_EXTRA);
        let pair_b = take(h, 1);
        let out_w = take(h, 1);
        let out_b = take(1, 1);
        Layout {
            w_in,
            b_in,
            rounds,
            head1_w,
            head1_b,
            head2_w,
            head2_b,
            pair_w,
            pair_b,
            out_w,
            out_b,
            total: off,
        }
    }

    /// Weight blocks with their fan-in, for initialization.
    fn blocks(&self) -> Vec<(Block, usize)> {
        let mut v = vec![(self.w_in, TRUNK_INPUT), (self.b_in, TRUNK_INPUT)];
        for &(ws, wn, b) in &self.rounds {
            let fan = 2 * ws.rows;
            v.extend([(ws, fan), (wn, fan), (b, fan)]);
        }
        let h = self.head1_w.rows;
        v.extend([
            (self.head1_w, h),
            (self.head1_b, h),
            (self.head2_w, h),
            (self.head2_b, h),
            (self.pair_w, 2 * h + PAIR_EXTRA),
            (self.pair_b, 2 * h + PAIR_EXTRA),
            (self.out_w, h),
            (self.out_b, h),
        ]);
        v
    }
}

/// Clean-graph probabilities predicted from a noisy graph, clamped to
/// `[1e-7, 1 - 1e-7]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CleanPrediction {
    pub px1: Vec<f64>,
    pub px2: Vec<f64>,
    /// Row-major `n x n`, symmetric; the diagonal is unused and set to 0.
    pub pe: Vec<f64>,
}

impl CleanPrediction {
    /// Builds a prediction from unclamped values; `pair_probs` follows the
    /// lexicographic `(i, j), i < j` order.
    pub fn from_parts(px1: Vec<f64>, px2: Vec<f64>, pair_probs: &[f64]) -> Self {
        let n = px1.len();
        let mut pe = vec![0.0; n * n];
        let mut k = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                let p = clamp_prob(pair_probs[k]);
                pe[i * n + j] = p;
                pe[j * n + i] = p;
                k += 1;
            }
        }
        CleanPrediction {
            px1: px1.into_iter().map(clamp_prob).collect(),
            px2: px2.into_iter().map(clamp_prob).collect(),
            pe,
        }
    }

    pub fn n(&self) -> usize {
        self.px1.len()
    }

    pub fn edge(&self, i: usize, j: usize) -> f64 {
        self.pe[i * self.n() + j]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossParts {
    pub x1: f64,
    pub x2: f64,
    pub edge: f64,
    pub total: f64,
}

/// `BCE(px1, x1) + BCE(px2, x2) + lambda * BCE(pe, E)`, summed over nodes and
/// unordered pairs.
pub fn loss(pred: &CleanPrediction, clean: &CondGraph, lambda: f64) -> Result<LossParts> {
    let n = clean.n();
    if pred.n() != n || pred.px2.len() != n || pred.pe.len() != n * n {
        return Err(Error::DimensionMismatch(format!(
            "prediction for {} nodes, clean graph has {n}",
            pred.n()
        )));
    }
    let x1: f64 = (0..n).map(|i| bce(pred.px1[i], clean.x1()[i])).sum();
    let x2: f64 = (0..n).map(|i| bce(pred.px2[i], clean.x2()[i])).sum();
    let mut edge = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            edge += bce(pred.edge(i, j), clean.has_edge(i, j));
        }
    }
    Ok(LossParts {
        x1,
        x2,
        edge,
        total: x1 + x2 + lambda * edge,
    })
}

struct TrunkCache {
    input: DMatrix<f64>,
    pre: Vec<DMatrix<f64>>,
    act: Vec<DMatrix<f64>>,
    agg: Vec<DMatrix<f64>>,
}

struct PairCache {
    pairs: Vec<(usize, usize)>,
    input: DMatrix<f64>,
    pre: DMatrix<f64>,
    act: DMatrix<f64>,
}

struct Forward {
    adj: DMatrix<f64>,
    trunks: [TrunkCache; 3],
    pair: PairCache,
    logit1: DVector<f64>,
    logit2: DVector<f64>,
    logit_e: DVector<f64>,
}

/// Shared message-passing trunk with two logistic node heads and a
/// symmetric pair head.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserModel {
    hyper: DenoiserHyper,
    params: Vec<f64>,
}

impl DenoiserModel {
    pub fn param_count_for(hyper: &DenoiserHyper) -> usize {
        Layout::new(hyper.rounds, hyper.hidden).total
    }

    pub fn zeros(hyper: DenoiserHyper) -> Self {
        let n = Self::param_count_for(&hyper);
        DenoiserModel {
            hyper,
            params: vec![0.0; n],
        }
    }

    pub fn init<R: Rng + ?Sized>(hyper: DenoiserHyper, rng: &mut R) -> Self {
        let mut model = Self::zeros(hyper);
        let layout = model.layout();
        for (block, fan_in) in layout.blocks() {
            init_uniform(&mut model.params[block.off..block.off + block.len()], fan_in, rng);
        }
        model
    }

    pub fn from_params(hyper: DenoiserHyper, params: Vec<f64>) -> Result<Self> {
        let expected = Self::param_count_for(&hyper);
        if params.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "{} parameters, expected {expected}",
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidParameter("non-finite parameter".into()));
        }
        Ok(DenoiserModel { hyper, params })
    }

    pub fn hyper(&self) -> &DenoiserHyper {
        &self.hyper
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn contagion(&self) -> ContagionParam {
        ContagionParam::new(self.hyper.contagion_p).unwrap_or_default()
    }

    fn layout(&self) -> Layout {
        Layout::new(self.hyper.rounds, self.hyper.hidden)
    }

    pub fn features(&self, g: &NoisyGraph) -> FeatureTensor {
        extract_features(g, self.hyper.steps, self.contagion())
    }

    /// Extracts features and predicts in one call.
    pub fn predict_graph(&self, g: &NoisyGraph) -> Result<CleanPrediction> {
        self.predict(&self.features(g), g)
    }

    pub fn predict(&self, feats: &FeatureTensor, g: &NoisyGraph) -> Result<CleanPrediction> {
        let fw = self.forward(feats, &g.graph)?;
        Ok(CleanPrediction::from_parts(
            fw.logit1.iter().map(|&z| sigmoid(z)).collect(),
            fw.logit2.iter().map(|&z| sigmoid(z)).collect(),
            &fw.logit_e.iter().map(|&z| sigmoid(z)).collect::<Vec<_>>(),
        ))
    }

    /// Loss against `clean` and its exact gradient with respect to every
    /// parameter.
    pub fn loss_and_grad(
        &self,
        feats: &FeatureTensor,
        g: &NoisyGraph,
        clean: &CondGraph,
        lambda: f64,
    ) -> Result<(LossParts, Vec<f64>)> {
        if clean.n() != g.graph.n() {
            return Err(Error::DimensionMismatch(format!(
                "noisy graph has {} nodes, clean graph has {}",
                g.graph.n(),
                clean.n()
            )));
        }
        let fw = self.forward(feats, &g.graph)?;
        let layout = self.layout();
        let n = clean.n();
        let h = self.hyper.hidden;
        let mut grad = vec![0.0; layout.total];
        let mut parts = LossParts::default();

        let mut d1 = DVector::zeros(n);
        let mut d2 = DVector::zeros(n);
        for i in 0..n {
            let (_, l, d) = logistic_bce(fw.logit1[i], clean.x1()[i]);
            parts.x1 += l;
            d1[i] = d;
            let (_, l, d) = logistic_bce(fw.logit2[i], clean.x2()[i]);
            parts.x2 += l;
            d2[i] = d;
        }
        let p = fw.pair.pairs.len();
        let mut de = DVector::zeros(p);
        for (k, &(i, j)) in fw.pair.pairs.iter().enumerate() {
            let (_, l, d) = logistic_bce(fw.logit_e[k], clean.has_edge(i, j));
            parts.edge += l;
            de[k] = lambda * d;
        }
        parts.total = parts.x1 + parts.x2 + lambda * parts.edge;

        // Node heads.
        let dh1 = &d1 * layout.head1_w.view(&self.params).transpose();
        let dh2 = &d2 * layout.head2_w.view(&self.params).transpose();
        let last = self.hyper.rounds;
        layout.head1_w.view_mut(&mut grad).gemm_tr(1.0, &fw.trunks[0].act[last], &d1, 1.0);
        grad[layout.head1_b.off] += d1.sum();
        layout.head2_w.view_mut(&mut grad).gemm_tr(1.0, &fw.trunks[1].act[last], &d2, 1.0);
        grad[layout.head2_b.off] += d2.sum();

        // Pair head.
        let out_w = layout.out_w.view(&self.params);
        layout.out_w.view_mut(&mut grad).gemm_tr(1.0, &fw.pair.act, &de, 1.0);
        grad[layout.out_b.off] += de.sum();
        let mut d_pre = &de * out_w.transpose();
        d_pre.zip_apply(&fw.pair.pre, |d, z| {
            if z <= 0.0 {
                *d = 0.0
            }
        });
        layout.pair_w.view_mut(&mut grad).gemm_tr(1.0, &d_pre, &fw.pair.input, 1.0);
        add_col_sums(&mut grad, layout.pair_b, &d_pre);
        let d_input = &d_pre * layout.pair_w.view(&self.params);
        let he = &fw.trunks[2].act[last];
        let mut dhe = DMatrix::zeros(n, h);
        for (k, &(i, j)) in fw.pair.pairs.iter().enumerate() {
            for c in 0..h {
                let dprod = d_input[(k, c)];
                let dsum = d_input[(k, h + c)];
                dhe[(i, c)] += dprod * he[(j, c)] + dsum;
                dhe[(j, c)] += dprod * he[(i, c)] + dsum;
            }
        }

        for (cache, dh) in fw.trunks.iter().zip([dh1, dh2, dhe]) {
            self.trunk_backward(&layout, &fw.adj, cache, dh, &mut grad);
        }
        Ok((parts, grad))
    }

    fn forward(&self, feats: &FeatureTensor, g: &CondGraph) -> Result<Forward> {
        let n = g.n();
        if feats.node_feats.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "features for {} nodes, graph has {n}",
                feats.node_feats.nrows()
            )));
        }
        let layout = self.layout();
        let adj = DMatrix::from_fn(n, n, |i, j| g.has_edge(i, j) as u8 as f64);
        let trunks = [View::C1, View::C2, View::Edge]
            .map(|v| self.trunk_forward(&layout, &adj, trunk_input(feats, v)));

        let head = |w: Block, b: Block, cache: &TrunkCache| -> DVector<f64> {
            let mut z = &cache.act[self.hyper.rounds] * w.view(&self.params);
            z.add_scalar_mut(self.params[b.off]);
            z.column(0).into_owned()
        };
        let logit1 = head(layout.head1_w, layout.head1_b, &trunks[0]);
        let logit2 = head(layout.head2_w, layout.head2_b, &trunks[1]);

        let h = self.hyper.hidden;
        let he = &trunks[2].act[self.hyper.rounds];
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
        let width = 2 * h + PAIR_EXTRA;
        let mut input = DMatrix::zeros(pairs.len(), width);
        for (k, &(i, j)) in pairs.iter().enumerate() {
            for c in 0..h {
                input[(k, c)] = he[(i, c)] * he[(j, c)];
                input[(k, h + c)] = he[(i, c)] + he[(j, c)];
            }
            input[(k, 2 * h)] = adj[(i, j)];
            input[(k, 2 * h + 1)] = (g.x1()[i] == g.x1()[j]) as u8 as f64;
            input[(k, 2 * h + 2)] = (g.x2()[i] == g.x2()[j]) as u8 as f64;
        }
        let mut pre = &input * layout.pair_w.view(&self.params).transpose();
        add_row_bias(&mut pre, layout.pair_b.slice(&self.params));
        let act = pre.map(|z| z.max(0.0));
        let mut le = &act * layout.out_w.view(&self.params);
        le.add_scalar_mut(self.params[layout.out_b.off]);
        let logit_e = le.column(0).into_owned();

        Ok(Forward {
            adj,
            trunks,
            pair: PairCache {
                pairs,
                input,
                pre,
                act,
            },
            logit1,
            logit2,
            logit_e,
        })
    }

    fn trunk_forward(&self, layout: &Layout, adj: &DMatrix<f64>, input: DMatrix<f64>) -> TrunkCache {
        let mut pre0 = &input * layout.w_in.view(&self.params).transpose();
        add_row_bias(&mut pre0, layout.b_in.slice(&self.params));
        let act0 = pre0.map(|z| z.max(0.0));
        let mut cache = TrunkCache {
            input,
            pre: vec![pre0],
            act: vec![act0],
            agg: Vec::with_capacity(layout.rounds.len()),
        };
        for &(ws, wn, b) in &layout.rounds {
            let prev = cache.act.last().unwrap();
            let agg = adj * prev;
            let mut pre = prev * ws.view(&self.params).transpose() + &agg * wn.view(&self.params).transpose();
            add_row_bias(&mut pre, b.slice(&self.params));
            let act = pre.map(|z| z.max(0.0));
            cache.agg.push(agg);
            cache.pre.push(pre);
            cache.act.push(act);
        }
        cache
    }

    fn trunk_backward(
        &self,
        layout: &Layout,
        adj: &DMatrix<f64>,
        cache: &TrunkCache,
        mut dh: DMatrix<f64>,
        grad: &mut [f64],
    ) {
        for r in (0..layout.rounds.len()).rev() {
            let (ws, wn, b) = layout.rounds[r];
            let mut dz = dh;
            dz.zip_apply(&cache.pre[r + 1], |d, z| {
                if z <= 0.0 {
                    *d = 0.0
                }
            });
            ws.view_mut(grad).gemm_tr(1.0, &dz, &cache.act[r], 1.0);
            wn.view_mut(grad).gemm_tr(1.0, &dz, &cache.agg[r], 1.0);
            add_col_sums(grad, b, &dz);
            let through_nb = &dz * wn.view(&self.params);
            dh = &dz * ws.view(&self.params) + adj * through_nb;
        }
        let mut dz = dh;
        dz.zip_apply(&cache.pre[0], |d, z| {
            if z <= 0.0 {
                *d = 0.0
            }
        });
        layout.w_in.view_mut(grad).gemm_tr(1.0, &dz, &cache.input, 1.0);
        add_col_sums(grad, layout.b_in, &dz);
    }
}

fn trunk_input(feats: &FeatureTensor, view: View) -> DMatrix<f64> {
    let n = feats.node_feats.nrows();
    let (m1, m2) = view.masks();
    let f = &feats.node_feats;
    DMatrix::from_fn(n, TRUNK_INPUT, |i, c| match c {
        0 => f[(i, COL_X1)] * m1,
        1 => f[(i, COL_X2)] * m2,
        2 => m1,
        3 => m2,
        4 => f[(i, COL_DEGREE)],
        5 => f[(i, COL_CLUSTERING)],
        6 => f[(i, COL_CONT1)] * m1,
        7 => f[(i, COL_CONT2)] * m2,
        _ => feats.graph_feats[c - 8],
    })
}

fn add_row_bias(m: &mut DMatrix<f64>, bias: &[f64]) {
    for (c, &b) in bias.iter().enumerate() {
        m.column_mut(c).add_scalar_mut(b);
    }
}

fn add_col_sums(grad: &mut [f64], block: Block, d: &DMatrix<f64>) {
    for c in 0..block.rows {
        grad[block.off + c] += d.column(c).sum();
    }
}
