//! Dual-condition classifier guidance.
//!
//! The outer classifier estimates `q(c_outer = 1 | G_t)`; the inner one
//! estimates `q(c_inner = 1 | G_t, c_outer = 1)` and is trained only on graphs
//! whose outer label is positive. During sampling each binary variable's
//! Bernoulli parameter is reweighted by the ratio of the product of both
//! outputs with that variable set to 1 versus 0.

mod classifier;

pub use classifier::{train_graph_classifier, ClassifierTrainConfig, GraphClassifier};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::denoiser::features::Structure;
use crate::error::{Error, Result};
use crate::forward::{ContagionParam, NoisyGraph};
use crate::graph::{CondGraph, Condition};
use crate::schedule::NoiseSchedule;

/// Whether strictly more than half of the nodes satisfy each condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MajorityLabel {
    pub label_c1: bool,
    pub label_c2: bool,
}

impl MajorityLabel {
    pub fn get(&self, c: Condition) -> bool {
        match c {
            Condition::C1 => self.label_c1,
            Condition::C2 => self.label_c2,
        }
    }
}

/// Ties (exactly `n / 2`) are labeled 0.
pub fn majority_label(g: &CondGraph) -> MajorityLabel {
    let n = g.n();
    let major = |bits: &[bool]| 2 * bits.iter().filter(|b| **b).count() > n;
    MajorityLabel {
        label_c1: major(g.x1()),
        label_c2: major(g.x2()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceClassifiers {
    /// The condition guided first; the inner classifier handles the other.
    pub outer_condition: Condition,
    pub outer: GraphClassifier,
    pub inner: GraphClassifier,
}

impl GuidanceClassifiers {
    pub fn inner_condition(&self) -> Condition {
        self.outer_condition.other()
    }

    /// `(q_outer, q_inner)` at the graph's step.
    pub fn probs(&self, g: &NoisyGraph) -> (f64, f64) {
        (self.outer.prob(g), self.inner.prob(g))
    }
}

#[derive(Debug, Clone)]
pub struct ClassifierOutcome {
    pub classifiers: GuidanceClassifiers,
    pub outer_loss: Vec<f64>,
    pub inner_loss: Vec<f64>,
}

/// Trains the outer classifier on the whole corpus and the inner one on the
/// outer-positive graphs.
pub fn train_classifiers(
    corpus: &[CondGraph],
    schedule: &NoiseSchedule,
    contagion: ContagionParam,
    outer_condition: Condition,
    cfg: &ClassifierTrainConfig,
) -> Result<ClassifierOutcome> {
    crate::denoiser::train::check_corpus(corpus)?;
    let inner_condition = outer_condition.other();
    let labels: Vec<MajorityLabel> = corpus.iter().map(majority_label).collect();
    let outer_set: Vec<(&CondGraph, bool)> = corpus
        .iter()
        .zip(&labels)
        .map(|(g, l)| (g, l.get(outer_condition)))
        .collect();
    let inner_set: Vec<(&CondGraph, bool)> = corpus
        .iter()
        .zip(&labels)
        .filter(|(_, l)| l.get(outer_condition))
        .map(|(g, l)| (g, l.get(inner_condition)))
        .collect();
    if inner_set.is_empty() {
        return Err(Error::Empty("no graph has a positive outer label".into()));
    }
    let (outer, outer_loss) = train_graph_classifier(&outer_set, schedule, contagion, cfg, 0)?;
    let (inner, inner_loss) = train_graph_classifier(&inner_set, schedule, contagion, cfg, 1)?;
    Ok(ClassifierOutcome {
        classifiers: GuidanceClassifiers {
            outer_condition,
            outer,
            inner,
        },
        outer_loss,
        inner_loss,
    })
}

/// Reweights a Bernoulli parameter by `ratio^gamma`:
/// `p r^g / (p r^g + 1 - p)`. Returns `p` unchanged when `gamma == 0` or
/// `ratio == 1`.
pub fn guide_bernoulli(p: f64, ratio: f64, gamma: f64) -> f64 {
    if gamma == 0.0 || ratio == 1.0 || p <= 0.0 || p >= 1.0 || p.is_nan() {
        return p.clamp(0.0, 1.0);
    }
    let w = ratio.clamp(f64::MIN_POSITIVE, f64::MAX).powf(gamma);
    if !w.is_finite() {
        return 1.0;
    }
    let num = p * w;
    num / (num + (1.0 - p))
}

/// Per-variable likelihood ratios `score(v = 1) / score(v = 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceRatios {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    /// Pairs `(i, j)`, `i < j`, in lexicographic order.
    pub edges: Vec<f64>,
}

impl GuidanceRatios {
    pub fn ones(n: usize) -> Self {
        GuidanceRatios {
            x1: vec![1.0; n],
            x2: vec![1.0; n],
            edges: vec![1.0; n * n.saturating_sub(1) / 2],
        }
    }

    pub fn x(&self, c: Condition) -> &[f64] {
        match c {
            Condition::C1 => &self.x1,
            Condition::C2 => &self.x2,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Var {
    Node(Condition, usize),
    Edge(usize, usize),
}

/// Two-point evaluation of `q_outer * q_inner` for every node-condition bit
/// and every edge bit, holding all other variables at their current values.
///
/// With `hard_gate`, the inner factor only contributes when the outer
/// classifier fires (`q_outer >= 0.5`) on the current graph.
pub fn classifier_ratios(clf: &GuidanceClassifiers, g: &NoisyGraph, hard_gate: bool) -> GuidanceRatios {
    let n = g.graph.n();
    let base_structure = Structure::of(&g.graph);
    let score_of = |graph: &CondGraph, s: &Structure, use_inner: bool| -> f64 {
        let outer = clf.outer.prob_from_features(&clf.outer.features_with(graph, s, g.t));
        if use_inner {
            outer * clf.inner.prob_from_features(&clf.inner.features_with(graph, s, g.t))
        } else {
            outer
        }
    };
    let use_inner = !hard_gate
        || clf
            .outer
            .prob_from_features(&clf.outer.features_with(&g.graph, &base_structure, g.t))
            >= 0.5;
    let current = score_of(&g.graph, &base_structure, use_inner);

    let mut vars = Vec::with_capacity(2 * n + n * n.saturating_sub(1) / 2);
    for c in Condition::BOTH {
        vars.extend((0..n).map(|i| Var::Node(c, i)));
    }
    for i in 0..n {
        vars.extend(((i + 1)..n).map(|j| Var::Edge(i, j)));
    }
    let ratios: Vec<f64> = vars
        .par_iter()
        .map(|&v| {
            let mut toggled = g.graph.clone();
            let (was_one, other) = match v {
                Var::Node(c, i) => {
                    let b = g.graph.x(c)[i];
                    toggled.set_x(c, i, !b);
                    (b, score_of(&toggled, &base_structure, use_inner))
                }
                Var::Edge(i, j) => {
                    let b = g.graph.has_edge(i, j);
                    toggled.set_edge(i, j, !b);
                    let s = Structure::of(&toggled);
                    (b, score_of(&toggled, &s, use_inner))
                }
            };
            if was_one {
                current / other
            } else {
                other / current
            }
        })
        .collect();
    let mut it = ratios.into_iter();
    GuidanceRatios {
        x1: it.by_ref().take(n).collect(),
        x2: it.by_ref().take(n).collect(),
        edges: it.collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::features::{COL_X1, POOLED_FEATS};
    use crate::nn::sigmoid;
    use proptest::prelude::*;

    fn constant_pair() -> GuidanceClassifiers {
        GuidanceClassifiers {
            outer_condition: Condition::C2,
            outer: GraphClassifier::constant(vec![4], 10),
            inner: GraphClassifier::constant(vec![], 10),
        }
    }

    #[test]
    fn majority_is_strict() {
        let mut g = CondGraph::empty(4);
        for i in 0..3 {
            g.set_x(Condition::C1, i, true);
        }
        assert!(majority_label(&g).label_c1);
        g.set_x(Condition::C1, 2, false);
        assert!(!majority_label(&g).label_c1);
        let all = CondGraph::from_edges(3, &[], vec![true; 3], vec![true; 3]).unwrap();
        assert_eq!(
            majority_label(&all),
            MajorityLabel {
                label_c1: true,
                label_c2: true
            }
        );
    }

    #[test]
    fn guide_examples() {
        assert!((guide_bernoulli(0.5, 3.0, 1.0) - 0.75).abs() < 1e-15);
        assert_eq!(guide_bernoulli(0.37, 1.0, 1.0), 0.37);
        assert_eq!(guide_bernoulli(0.37, 5.0, 0.0), 0.37);
        assert_eq!(guide_bernoulli(0.0, 5.0, 1.0), 0.0);
        assert_eq!(guide_bernoulli(1.0, 0.2, 1.0), 1.0);
    }

    #[test]
    fn constant_classifiers_give_unit_ratios() {
        let g = CondGraph::from_edges(4, &[(0, 1), (2, 3)], vec![true, false, true, false], vec![false; 4]).unwrap();
        let r = classifier_ratios(&constant_pair(), &NoisyGraph { graph: g, t: 3 }, false);
        assert_eq!(r, GuidanceRatios::ones(4));
    }

    #[test]
    fn linear_readout_matches_closed_form() {
        // Outer reads only mean(x1) with weight w; inner is constant. Toggling
        // x1 of one node in a 2-node graph moves the mean by 1/2, so the
        // ratio is sigmoid(b + w m1) / sigmoid(b + w m0).
        let (w, b) = (1.7, -0.4);
        let mut outer = GraphClassifier::constant(vec![], 10);
        outer.params[COL_X1] = w;
        outer.params[POOLED_FEATS] = b;
        let clf = GuidanceClassifiers {
            outer_condition: Condition::C1,
            outer,
            inner: GraphClassifier::constant(vec![], 10),
        };
        let g = CondGraph::from_edges(2, &[(0, 1)], vec![true, false], vec![false, false]).unwrap();
        let r = classifier_ratios(&clf, &NoisyGraph { graph: g, t: 4 }, false);
        let expected = sigmoid(b + w * 0.5) / sigmoid(b);
        assert!((r.x1[0] - expected).abs() < 1e-12);
        assert!((r.x1[1] - sigmoid(b + w) / sigmoid(b + w * 0.5)).abs() < 1e-12);
        assert!(r.x2.iter().all(|&v| v == 1.0));
        assert!(r.edges.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn hard_gate_drops_inner_factor_when_outer_is_off() {
        let mut outer = GraphClassifier::constant(vec![], 10);
        outer.params[POOLED_FEATS] = -3.0;
        let mut inner = GraphClassifier::constant(vec![], 10);
        inner.params[COL_X1] = 2.0;
        let clf = GuidanceClassifiers {
            outer_condition: Condition::C2,
            outer,
            inner,
        };
        let g = NoisyGraph {
            graph: CondGraph::from_edges(3, &[], vec![false; 3], vec![false; 3]).unwrap(),
            t: 2,
        };
        assert!(classifier_ratios(&clf, &g, false).x1[0] > 1.0);
        assert_eq!(classifier_ratios(&clf, &g, true).x1[0], 1.0);
    }

    proptest! {
        #[test]
        fn guide_is_monotone_and_composes(
            p in 0.001f64..0.999,
            r1 in 0.01f64..100.0,
            r2 in 0.01f64..100.0,
            gamma in 0.0f64..3.0,
        ) {
            let a = guide_bernoulli(p, r1, gamma);
            prop_assert!(a > 0.0 && a < 1.0);
            if r2 > r1 {
                prop_assert!(guide_bernoulli(p, r2, gamma) >= a);
            }
            let q = (p + 0.5 * (1.0 - p)).min(0.999);
            prop_assert!(guide_bernoulli(q, r1, gamma) >= a);
            let twice = guide_bernoulli(guide_bernoulli(p, r1, 1.0), r2, 1.0);
            let once = guide_bernoulli(p, r1 * r2, 1.0);
            prop_assert!((twice - once).abs() < 1e-12);
        }
    }
}
