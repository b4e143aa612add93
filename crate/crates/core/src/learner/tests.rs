use std::collections::BTreeMap;

use proptest::prelude::*;

use super::*;
use crate::eval::{align_labels, parity_hmm, smoothed_parity_model, tv_leaf_distance, ParitySpec};
use crate::model::generate::{random_model, random_model_on, GeneratorConfig, Shape};
use crate::rng::{substream, Domain};
use crate::spectral::ExactMoments;

fn generated(n: usize, k: usize, shape: Shape, seed: u64) -> MarkovTreeModel {
    let cfg = GeneratorConfig {
        n,
        k,
        shape,
        det_lo: 0.3,
        det_hi: 0.9,
        sigma: 0.02,
        ..GeneratorConfig::default()
    };
    random_model(&cfg, seed).unwrap()
}

fn on(topology: &TreeTopology, k: usize, seed: u64) -> MarkovTreeModel {
    let cfg = GeneratorConfig {
        n: topology.leaf_count(),
        k,
        det_lo: 0.3,
        det_hi: 0.9,
        sigma: 0.02,
        ..GeneratorConfig::default()
    };
    random_model_on(topology, &cfg, &mut substream(seed, Domain::Generator, 0, 0)).unwrap()
}

fn exact_fit(m: &MarkovTreeModel) -> ReconstructionResult {
    fullrecon(m.topology(), &ExactMoments::new(m.clone()), &LearnerConfig::default()).unwrap()
}

#[test]
fn quartet_is_recovered_exactly() {
    let t = TreeTopology::parse_newick("((1,2),(3,4));").unwrap();
    let m = on(&t, 3, 4);
    let out = exact_fit(&m);
    assert_eq!(out.depth, 1);
    assert!(align_labels(&out.model_hat, &m).unwrap().max_l1 < 1e-8);
    assert!(tv_leaf_distance(&out.model_hat, &m).unwrap().tv < 1e-10);
}

#[test]
fn reference_ball_limits_one_subtree() {
    let t = TreeTopology::parse_newick("((1,2),(3,4));").unwrap();
    let m = on(&t, 2, 9);
    let moments = ExactMoments::new(m.clone());
    let cfg = LearnerConfig::default();
    // radius one from leaf 1 reaches a single internal node and leaves two separators
    let mut state = PartitionState::new(&t, 1);
    leafrecon(&t, &moments, 1, &mut state, &cfg).unwrap();
    assert_eq!(state.subtrees[0].nodes.len(), 2);
    assert_eq!(state.separators.len(), 2);
    // a radius covering the tree recovers both internal nodes without separators
    let mut state = PartitionState::new(&t, 3);
    leafrecon(&t, &moments, 1, &mut state, &cfg).unwrap();
    assert!(state.separators.is_empty());
    assert!(state.uncovered(&t).is_empty());
    assert_eq!(t.internal_nodes().iter().filter(|&&v| state.owner(v).is_some()).count(), 2);
}

#[test]
fn separators_are_patched_on_six_leaves() {
    let t = TreeTopology::caterpillar(&[1, 2, 3, 4, 5, 6]).unwrap();
    assert_eq!(depth(&t), 2);
    let m = on(&t, 3, 21);
    let out = exact_fit(&m);
    assert!(!out.separators.is_empty());
    assert!(out.subtrees.len() > 1);
    let report = align_labels(&out.model_hat, &m).unwrap();
    for sep in &out.separators {
        let e = (sep.w.min(sep.w_prime), sep.w.max(sep.w_prime));
        assert!(report.per_edge_l1[&e] < 1e-8);
    }
    assert!(report.max_l1 < 1e-8);
}

#[test]
fn identity_factors_pass_the_pair_law_through() {
    let t = TreeTopology::parse_newick("((1,2),(3,4));").unwrap();
    let m = on(&t, 3, 5);
    let moments = ExactMoments::new(m.clone());
    let id = Matrix::identity(3, 3);
    let pi = moments.marginal(1).unwrap();
    let patch = seprecon(&moments, 1, 3, &id, &id, &pi, &moments.marginal(3).unwrap(), &LearnerConfig::default()).unwrap();
    let pair = moments.pair(1, 3).unwrap();
    assert!(linalg::max_abs(&(patch.forward.entries() - &pair)) < 1e-14);
    let singular = Matrix::from_element(3, 3, 1.0 / 3.0);
    assert!(matches!(
        seprecon(&moments, 1, 3, &singular, &id, &pi, &pi, &LearnerConfig::default()),
        Err(Error::IllConditionedFactor { .. })
    ));
}

#[test]
fn identity_model_is_recovered_as_identity() {
    let t = TreeTopology::parse_newick("((1,2),((3,4),(5,6)));").unwrap();
    let root = t.internal_nodes()[0];
    let parent = t.parents_from(root);
    let edges: BTreeMap<_, _> = (0..t.node_count())
        .filter_map(|v| parent[v].map(|u| ((u, v), TransitionMatrix::identity(2))))
        .collect();
    let m = MarkovTreeModel::new(t.clone(), root, vec![0.3, 0.7], edges).unwrap();
    // the probed operator is diag(U), so every decomposition separates
    let out = fullrecon(&t, &ExactMoments::new(m.clone()), &LearnerConfig::default()).unwrap();
    for p in out.directed.values() {
        let ones = p.entries().iter().filter(|&&x| (x - 1.0).abs() < 1e-8).count();
        let zeros = p.entries().iter().filter(|&&x| x.abs() < 1e-8).count();
        assert_eq!((ones, zeros), (2, 2));
    }
    assert!(align_labels(&out.model_hat, &m).unwrap().max_l1 < 1e-8);
}

#[test]
fn contracted_topologies_are_rejected() {
    let t = TreeTopology::parse_newick("(1,2,3,4);").unwrap();
    let m = on(&t, 2, 1);
    assert!(matches!(
        fullrecon(&t, &ExactMoments::new(m), &LearnerConfig::default()),
        Err(Error::InvalidTopology(_))
    ));
}

#[test]
fn two_leaves_use_the_pair_law() {
    let t = TreeTopology::from_edges(2, &[(0, 1)], &[(0, 1), (1, 2)]).unwrap();
    let m = on(&t, 3, 2);
    let out = exact_fit(&m);
    assert!(tv_leaf_distance(&out.model_hat, &m).unwrap().tv < 1e-12);
}

#[test]
fn strict_mode_rejects_nonpositive_marginals() {
    let strict = LearnerConfig {
        strict: true,
        ..LearnerConfig::default()
    };
    assert!(matches!(
        finish_marginal(4, vec![0.5, 0.5, 0.0], &strict),
        Err(Error::MarginalDegenerate { node: 4, .. })
    ));
    let lenient = finish_marginal(4, vec![0.6, 0.5, -0.1], &LearnerConfig::default()).unwrap();
    assert!((lenient.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    assert!(lenient[2] > 0.0);
}

#[test]
fn singular_parity_fails_loudly() {
    for n in 1..=6 {
        let spec = ParitySpec::new(n, 1..=n, 0.1).unwrap();
        let m = parity_hmm(&spec).unwrap();
        let err = fullrecon(m.topology(), &ExactMoments::new(m.clone()), &LearnerConfig::default()).unwrap_err();
        assert!(
            matches!(
                err.root_cause(),
                Error::IllConditionedPair { .. }
                    | Error::ZeroMarginal { .. }
                    | Error::SeparationFailure { .. }
                    | Error::IllConditionedFactor { .. }
                    | Error::NonRealSpectrum { .. }
            ),
            "n = {n}: {err}"
        );
    }
}

#[test]
fn smoothed_parity_is_learnable() {
    let spec = ParitySpec::new(5, [1, 3, 4], 0.1).unwrap();
    let m = smoothed_parity_model(&spec, 0.5).unwrap();
    let out = fullrecon(m.topology(), &ExactMoments::new(m.clone()), &LearnerConfig::default()).unwrap();
    assert!(align_labels(&out.model_hat, &m).unwrap().max_l1 < 1e-6);
}

#[test]
fn runs_are_deterministic() {
    let m = generated(7, 3, Shape::Binary, 77);
    let moments = ExactMoments::new(m.clone());
    let samples = m.sample(2000, 5);
    let sampled = crate::spectral::SampleMoments::new(&samples, false);
    let cfg = LearnerConfig {
        probe_seed: 12,
        ..LearnerConfig::default()
    };
    let a = fullrecon(m.topology(), &moments, &cfg).unwrap();
    let b = fullrecon(m.topology(), &moments, &cfg).unwrap();
    assert_eq!(a.directed, b.directed);
    assert_eq!(a.edges, b.edges);
    let cfg = LearnerConfig::sampled(3, 2000, 12);
    let x = fullrecon(m.topology(), &sampled, &cfg).map(|r| r.directed);
    let y = fullrecon(m.topology(), &sampled, &cfg).map(|r| r.directed);
    assert_eq!(format!("{x:?}"), format!("{y:?}"));
}

/// `P^{ab}` recomposed along the tree path from the recovered matrices.
fn path_product(out: &ReconstructionResult, t: &TreeTopology, a: usize, b: usize) -> Matrix {
    let path = t.path(t.leaf(a), t.leaf(b));
    let k = out.model_hat.k();
    path.windows(2)
        .fold(Matrix::identity(k, k), |acc, w| acc * out.directed[&(w[0], w[1])].entries())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn covers_every_edge_within_the_ball(seed in 0u64..10_000, n in 2usize..14, k in 2usize..4) {
        let t = TreeTopology::random_binary(n, &mut substream(seed, Domain::Experiment, 0, 0)).unwrap();
        let m = on(&t, k, seed);
        let out = exact_fit(&m);
        prop_assert_eq!(out.directed.len(), 2 * t.edge_count());
        for sub in &out.subtrees {
            let d = t.distances_from(t.leaf(sub.reference));
            prop_assert!(sub.nodes.iter().all(|&v| d[v] <= out.depth));
        }
        for e in &out.edges {
            if let EdgeSource::Spectral { probes: (b, c), .. } = e.source {
                let (d0, d1) = (t.distances_from(e.edge.0), t.distances_from(e.edge.1));
                for leaf in [b, c] {
                    let node = t.leaf(leaf);
                    prop_assert!(d0[node].min(d1[node]) <= out.depth + 1);
                }
            }
        }
        // both directions agree through the recovered marginals
        for (&(u, v), p) in &out.directed {
            let back = crate::model::bayes_reverse(p, &out.marginals[u], &out.marginals[v]).unwrap();
            prop_assert!(linalg::max_abs(&(back.entries() - out.directed[&(v, u)].entries())) < 1e-8);
        }
    }

    #[test]
    fn exact_recovery_and_path_consistency(seed in 0u64..10_000, n in 4usize..9, k in 2usize..5) {
        let m = generated(n, k, Shape::Binary, seed);
        let moments = ExactMoments::new(m.clone());
        let out = exact_fit(&m);
        prop_assert!(align_labels(&out.model_hat, &m).unwrap().max_l1 < 1e-6);
        prop_assert!(tv_leaf_distance(&out.model_hat, &m).unwrap().tv < 1e-8);
        for a in 1..=n {
            for b in a + 1..=n {
                let composed = path_product(&out, m.topology(), a, b);
                prop_assert!(linalg::entrywise_l1(&(composed - moments.pair(a, b).unwrap())) < 1e-6);
            }
        }
    }
}
