use std::collections::BTreeMap;

use proptest::prelude::*;

use super::*;
use crate::model::generate::{random_model, GeneratorConfig, Shape};
use crate::model::{MarkovTreeModel, NodeId, TransitionMatrix, TreeTopology};
use crate::spectral::{ExactMoments, MomentSource};

/// Two-state model with symmetric matrices and a uniform root; `det(u, v)` picks each edge.
fn symmetric_model(t: &TreeTopology, det: impl Fn(NodeId, NodeId) -> f64) -> MarkovTreeModel {
    let root = t.internal_nodes()[0];
    let parent = t.parents_from(root);
    let mut edges = BTreeMap::new();
    for v in 0..t.node_count() {
        if let Some(u) = parent[v] {
            let p = (1.0 - det(u, v)) / 2.0;
            edges.insert((u, v), TransitionMatrix::from_rows(&[vec![1.0 - p, p], vec![p, 1.0 - p]]).unwrap());
        }
    }
    MarkovTreeModel::new(t.clone(), root, vec![0.5, 0.5], edges).unwrap()
}

fn exact_metric(m: &MarkovTreeModel) -> LogDetMetric {
    LogDetMetric::from_moments(&ExactMoments::new(m.clone())).unwrap()
}

/// Sum of edge weights along the leaf path.
fn path_weight(m: &MarkovTreeModel, a: usize, b: usize) -> f64 {
    let t = m.topology();
    t.path(t.leaf(a), t.leaf(b))
        .windows(2)
        .map(|w| edge_logdet_weight(m, w[0], w[1]).unwrap())
        .sum()
}

fn wide(delta: f64) -> TopologyParams {
    TopologyParams {
        delta_cap: 100.0,
        contraction_delta: delta,
        quartet_mode: QuartetMode::Contract,
    }
}

#[test]
fn distance_is_additive_on_a_caterpillar() {
    let cfg = GeneratorConfig {
        n: 5,
        k: 3,
        shape: Shape::Caterpillar,
        det_lo: 0.3,
        det_hi: 0.9,
        sigma: 0.02,
        ..GeneratorConfig::default()
    };
    let m = random_model(&cfg, 17).unwrap();
    let metric = exact_metric(&m);
    let exact = ExactMoments::new(m.clone());
    for a in 1..=5 {
        for b in a + 1..=5 {
            assert!((metric.get(a, b) - path_weight(&m, a, b)).abs() < 1e-10);
            // the raw log-det differs from the additive one by the marginal terms
            let f = exact.joint_pair(a, b).unwrap();
            let (pa, pb) = (exact.marginal(a).unwrap(), exact.marginal(b).unwrap());
            let shift: f64 = pa.iter().chain(&pb).map(|p| 0.5 * p.ln()).sum();
            assert!((logdet_pair(&f) + shift - metric.get(a, b)).abs() < 1e-10);
        }
    }
}

#[test]
fn two_edge_path_matches_weights() {
    let t = TreeTopology::parse_newick("(1,2,3);").unwrap();
    let m = symmetric_model(&t, |_, v| if v == t.leaf(1) { 0.7 } else { 0.5 });
    let metric = exact_metric(&m);
    assert!((metric.get(1, 2) - (-(0.7f64.ln()) - 0.5f64.ln())).abs() < 1e-10);
}

fn caterpillar6(middle_det: f64) -> MarkovTreeModel {
    let t = TreeTopology::caterpillar(&[1, 2, 3, 4, 5, 6]).unwrap();
    symmetric_model(&t, |u, v| {
        if t.is_leaf(u) || t.is_leaf(v) {
            0.8
        } else if (u.min(v), u.max(v)) == (7, 8) {
            middle_det
        } else {
            0.6
        }
    })
}

#[test]
fn resolves_a_clear_caterpillar() {
    let m = caterpillar6(0.6);
    let out = reconstruct_caterpillar(&exact_metric(&m), &wide(0.05)).unwrap();
    assert!(out.topology.same_topology(m.topology()));
    assert!(out.contracted.is_empty());
    assert!(out.topology.is_caterpillar());
}

#[test]
fn contracts_exactly_the_short_edge() {
    let m = caterpillar6(0.9999);
    let out = reconstruct_caterpillar(&exact_metric(&m), &wide(0.01)).unwrap();
    let t = m.topology();
    let mut want = t.internal_splits();
    assert!(want.remove(&t.edge_split(7, 8)));
    assert_eq!(out.topology.internal_splits(), want);
    assert_eq!(out.contracted, vec![vec![3, 4]]);
    assert!(!out.topology.is_binary());
    let strict = TopologyParams {
        quartet_mode: QuartetMode::Strict,
        ..wide(0.01)
    };
    assert!(matches!(
        reconstruct_caterpillar(&exact_metric(&m), &strict),
        Err(Error::InsufficientSignal(_))
    ));
}

#[test]
fn single_quartet_reduces_to_four_point() {
    let t = TreeTopology::parse_newick("((1,3),(2,4));").unwrap();
    let m = symmetric_model(&t, |_, _| 0.7);
    let metric = exact_metric(&m);
    let out = reconstruct_caterpillar(&metric, &wide(0.05)).unwrap();
    assert!(out.topology.same_topology(&t));
    let bin = reconstruct_binary(&metric, &wide(0.05)).unwrap();
    assert!(bin.topology.same_topology(&t));
    assert_eq!(
        four_point([1, 2, 3, 4], |a, b| metric.get(a, b), 0.05),
        QuartetDecision::Split(QuartetSplit::new(1, 3, 2, 4))
    );
}

#[test]
fn star_quartet_has_no_signal() {
    let t = TreeTopology::parse_newick("(1,2,3,4);").unwrap();
    let m = symmetric_model(&t, |_, _| 0.7);
    assert!(matches!(
        reconstruct_caterpillar(&exact_metric(&m), &wide(0.05)),
        Err(Error::InsufficientSignal(_))
    ));
    assert!(matches!(
        reconstruct_binary(&exact_metric(&m), &wide(0.05)),
        Err(Error::InsufficientSignal(_))
    ));
}

#[test]
fn binary_five_leaves_from_exact_distances() {
    let t = TreeTopology::parse_newick("((1,4),3,(2,5));").unwrap();
    let dets = [0.45, 0.55, 0.65, 0.75, 0.8, 0.5, 0.6];
    let edges = t.edges();
    let m = symmetric_model(&t, |u, v| {
        let e = (u.min(v), u.max(v));
        dets[edges.iter().position(|&x| x == e).unwrap()]
    });
    for (u, v) in t.edges() {
        let w = edge_logdet_weight(&m, u, v).unwrap();
        assert!((0.2..=1.2).contains(&w));
    }
    let out = reconstruct_binary(&exact_metric(&m), &wide(0.05)).unwrap();
    assert!(out.topology.same_topology(&t));
}

#[test]
fn conflicting_quartets_are_reported() {
    // a metric that is not a tree metric: every quartet decided, jointly inconsistent
    let psi = |a: usize, b: usize| {
        let (a, b) = (a.min(b), a.max(b));
        match (a, b) {
            (1, 2) | (3, 4) | (1, 5) | (2, 3) | (4, 5) => 1.0,
            _ => 3.0,
        }
    };
    let metric = LogDetMetric::from_fn(5, psi);
    match reconstruct_binary(&metric, &wide(0.05)) {
        Err(Error::QuartetConflict { .. }) | Err(Error::InsufficientSignal(_)) => {}
        other => panic!("unexpected {other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn additivity_and_nonnegativity(seed in 0u64..10_000, k in 2usize..5) {
        let cfg = GeneratorConfig { n: 6, k, shape: Shape::Binary, det_lo: 0.2, det_hi: 0.95, sigma: 0.01, ..GeneratorConfig::default() };
        let m = random_model(&cfg, seed).unwrap();
        let metric = exact_metric(&m);
        for (u, v) in m.topology().edges() {
            prop_assert!(edge_logdet_weight(&m, u, v).unwrap() >= 0.0);
        }
        for a in 1..=6 {
            for b in a + 1..=6 {
                prop_assert!((metric.get(a, b) - path_weight(&m, a, b)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn binary_output_agrees_with_four_point(seed in 0u64..10_000, n in 4usize..9) {
        let cfg = GeneratorConfig { n, k: 2, shape: Shape::Binary, det_lo: 0.3, det_hi: 0.85, sigma: 0.02, ..GeneratorConfig::default() };
        let m = random_model(&cfg, seed).unwrap();
        let metric = exact_metric(&m);
        let delta = 0.05;
        let internal_ok = m.topology().edges().iter().all(|&(u, v)| {
            m.topology().is_leaf(u) || m.topology().is_leaf(v) || edge_logdet_weight(&m, u, v).unwrap() >= 2.0 * delta
        });
        prop_assume!(internal_ok);
        let out = reconstruct_binary(&metric, &wide(delta)).unwrap();
        prop_assert!(out.topology.same_topology(m.topology()));
        for q in decide_short_quartets(&metric, 100.0, delta).decided {
            let [a, b, c, d] = q.leaves();
            prop_assert_eq!(out.topology.quartet_split([a, b, c, d]), Some((q.left, q.right)));
        }
    }

    #[test]
    fn caterpillar_keeps_h_edges_together(seed in 0u64..10_000, n in 4usize..10) {
        let cfg = GeneratorConfig { n, k: 2, shape: Shape::Caterpillar, det_lo: 0.3, det_hi: 0.999, sigma: 0.02, ..GeneratorConfig::default() };
        let m = random_model(&cfg, seed).unwrap();
        let metric = exact_metric(&m);
        if let Ok(out) = reconstruct_caterpillar(&metric, &wide(0.05)) {
            prop_assert!(out.topology.is_caterpillar());
            for &(a, b) in &out.graph.edges {
                for split in out.topology.internal_splits() {
                    prop_assert_eq!(split.contains(&a), split.contains(&b));
                }
            }
            // every output split is a true split
            let truth = m.topology().internal_splits();
            prop_assert!(out.topology.internal_splits().is_subset(&truth));
        }
    }
}
