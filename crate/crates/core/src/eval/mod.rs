//! Distances between models on the leaves and label-aligned matrix errors.

mod parity;

use std::collections::BTreeMap;

pub use parity::{noisy_parity_oracle, parity_hmm, smoothed_parity_model, ParityLaw, ParitySpec};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::model::{MarkovTreeModel, NodeId, JOINT_BUDGET};

/// Largest `k` for which per-node permutations are searched exhaustively.
pub const ALIGN_MAX_K: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TvReport {
    /// `sum |p1 - p2| / 2`, in `[0, 1]`.
    pub tv: f64,
    /// `sum |p1 - p2|`.
    pub l1: f64,
}

/// Exact distance between the leaf laws of two models over the same leaves.
pub fn tv_leaf_distance(m1: &MarkovTreeModel, m2: &MarkovTreeModel) -> Result<TvReport> {
    tv_leaf_distance_with_budget(m1, m2, JOINT_BUDGET)
}

pub fn tv_leaf_distance_with_budget(m1: &MarkovTreeModel, m2: &MarkovTreeModel, cap: u128) -> Result<TvReport> {
    if m1.k() != m2.k() || m1.topology().leaf_count() != m2.topology().leaf_count() {
        return Err(Error::TopologyMismatch(format!(
            "models differ in k ({} vs {}) or leaf count ({} vs {})",
            m1.k(),
            m2.k(),
            m1.topology().leaf_count(),
            m2.topology().leaf_count()
        )));
    }
    let leaves = |m: &MarkovTreeModel| -> Vec<NodeId> {
        (1..=m.topology().leaf_count()).map(|l| m.topology().leaf(l)).collect()
    };
    let p1 = m1.exact_joint_with_budget(&leaves(m1), cap)?;
    let p2 = m2.exact_joint_with_budget(&leaves(m2), cap)?;
    let l1: f64 = p1.probs.iter().zip(&p2.probs).map(|(a, b)| (a - b).abs()).sum();
    Ok(TvReport { tv: l1 / 2.0, l1 })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlignmentReport {
    /// For every internal node of the truth, `perm[i]` is the estimated label of true state `i`.
    pub per_node_perm: BTreeMap<NodeId, Vec<usize>>,
    /// Entrywise L1 error of each undirected edge, the worse of its two directions.
    pub per_edge_l1: BTreeMap<(NodeId, NodeId), f64>,
    pub max_l1: f64,
}

/// `est` read in the labels of truth: `out[i][j] = est[pu[i]][pv[j]]`.
fn relabel(est: &Matrix, pu: &[usize], pv: &[usize]) -> Matrix {
    Matrix::from_fn(est.nrows(), est.ncols(), |i, j| est[(pu[i], pv[j])])
}

/// Aligns the internal labels of `est` to `truth`, node by node outward from leaf 1.
///
/// Each node takes the permutation minimizing the error of the matrix from
/// its already aligned parent; topologies are matched up to isomorphism.
pub fn align_labels(est: &MarkovTreeModel, truth: &MarkovTreeModel) -> Result<AlignmentReport> {
    let k = truth.k();
    if est.k() != k {
        return Err(Error::TopologyMismatch(format!("k differs: {} vs {k}", est.k())));
    }
    if k > ALIGN_MAX_K {
        return Err(Error::InvalidConfig(format!("alignment searches at most k = {ALIGN_MAX_K}")));
    }
    let t = truth.topology();
    let map = t
        .node_correspondence(est.topology())
        .ok_or_else(|| Error::TopologyMismatch("estimated and true topologies differ".into()))?;
    let perms = linalg::permutations(k);
    let identity: Vec<usize> = (0..k).collect();
    let start = t.leaf(1);
    let order = t.bfs_order(start);
    let parent = t.parents_from(start);
    let mut perm: Vec<Vec<usize>> = vec![identity.clone(); t.node_count()];
    let mut per_node_perm = BTreeMap::new();
    for &v in order.iter().skip(1) {
        if t.is_leaf(v) {
            continue;
        }
        let u = parent[v].expect("non-start node has a parent");
        let e = est.directed_matrix(map[u], map[v])?;
        let tr = truth.directed_matrix(u, v)?;
        let best = perms
            .iter()
            .map(|p| (linalg::entrywise_l1(&(relabel(e.entries(), &perm[u], p) - tr.entries())), p))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, p)| p.clone())
            .expect("at least one permutation");
        perm[v] = best.clone();
        per_node_perm.insert(v, best);
    }
    let mut per_edge_l1 = BTreeMap::new();
    let mut max_l1 = 0.0f64;
    for (u, v) in t.edges() {
        let mut worst = 0.0f64;
        for (x, y) in [(u, v), (v, u)] {
            let e = est.directed_matrix(map[x], map[y])?;
            let tr = truth.directed_matrix(x, y)?;
            worst = worst.max(linalg::entrywise_l1(&(relabel(e.entries(), &perm[x], &perm[y]) - tr.entries())));
        }
        per_edge_l1.insert((u, v), worst);
        max_l1 = max_l1.max(worst);
    }
    Ok(AlignmentReport {
        per_node_perm,
        per_edge_l1,
        max_l1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::generate::{random_model, GeneratorConfig, Shape};
    use crate::model::{TransitionMatrix, TreeTopology};
    use proptest::prelude::*;

    fn model(seed: u64, n: usize, k: usize) -> MarkovTreeModel {
        let cfg = GeneratorConfig {
            n,
            k,
            shape: Shape::Binary,
            det_lo: 0.3,
            det_hi: 0.9,
            sigma: 0.02,
            ..GeneratorConfig::default()
        };
        random_model(&cfg, seed).unwrap()
    }

    #[test]
    fn tv_of_identical_and_disjoint_models() {
        let m = model(3, 5, 3);
        let r = tv_leaf_distance(&m, &m).unwrap();
        assert_eq!(r.tv, 0.0);
        let t = TreeTopology::from_edges(2, &[(0, 1)], &[(0, 1), (1, 2)]).unwrap();
        let edge = |root: usize| {
            let mut e = BTreeMap::new();
            e.insert((0, 1), TransitionMatrix::identity(2));
            let mut dist = vec![0.0; 2];
            dist[root] = 1.0;
            MarkovTreeModel::new(t.clone(), 0, dist, e).unwrap()
        };
        let r = tv_leaf_distance(&edge(0), &edge(1)).unwrap();
        assert!((r.tv - 1.0).abs() < 1e-15);
        assert!((r.l1 - 2.0).abs() < 1e-15);
    }

    #[test]
    fn tv_ignores_internal_relabelings() {
        let m = model(8, 6, 3);
        let v = m.topology().internal_nodes()[1];
        let p = m.permute_states(v, &[2, 0, 1]);
        assert!(tv_leaf_distance(&m, &p).unwrap().tv < 1e-12);
    }

    #[test]
    fn tv_budget_is_enforced() {
        let m = model(1, 6, 4);
        assert!(matches!(
            tv_leaf_distance_with_budget(&m, &m, 100),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn alignment_recovers_a_swapped_node() {
        let m = model(11, 6, 3);
        let same = align_labels(&m, &m).unwrap();
        assert_eq!(same.max_l1, 0.0);
        assert!(same.per_node_perm.values().all(|p| p == &vec![0, 1, 2]));
        let v = m.topology().internal_nodes()[2];
        let swapped = m.permute_states(v, &[1, 0, 2]);
        let r = align_labels(&swapped, &m).unwrap();
        assert!(r.max_l1 < 1e-12, "{}", r.max_l1);
        assert_ne!(r.per_node_perm[&v], vec![0, 1, 2]);
    }

    #[test]
    fn alignment_rejects_other_topologies() {
        let cfg = GeneratorConfig::default();
        let mut rng = crate::rng::substream(5, crate::rng::Domain::Experiment, 0, 0);
        let mut on = |order: &[usize]| {
            let t = TreeTopology::caterpillar(order).unwrap();
            crate::model::generate::random_model_on(&t, &cfg, &mut rng).unwrap()
        };
        let a = on(&[1, 2, 3, 4, 5]);
        let b = on(&[1, 3, 5, 2, 4]);
        assert!(matches!(align_labels(&a, &b), Err(Error::TopologyMismatch(_))));
        let c = model(1, 6, 2);
        assert!(matches!(align_labels(&a, &c), Err(Error::TopologyMismatch(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn tv_is_a_pseudometric(s in 0u64..1000) {
            let cfg = GeneratorConfig { n: 5, k: 2, shape: Shape::Caterpillar, det_lo: 0.3, det_hi: 0.9, sigma: 0.02, ..GeneratorConfig::default() };
            let top = random_model(&cfg, s).unwrap();
            // three models on one topology so the leaf sets agree
            let mut rng = crate::rng::substream(s, crate::rng::Domain::Experiment, 1, 0);
            let others: Vec<MarkovTreeModel> = (0..2)
                .map(|_| crate::model::generate::random_model_on(top.topology(), &cfg, &mut rng).unwrap())
                .collect();
            let (a, b, c) = (&top, &others[0], &others[1]);
            let ab = tv_leaf_distance(a, b).unwrap().tv;
            let ba = tv_leaf_distance(b, a).unwrap().tv;
            let bc = tv_leaf_distance(b, c).unwrap().tv;
            let ac = tv_leaf_distance(a, c).unwrap().tv;
            prop_assert!((ab - ba).abs() < 1e-15);
            prop_assert!(ac <= ab + bc + 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab));
        }

        #[test]
        fn alignment_undoes_random_relabelings(seed in 0u64..1000, picks in proptest::collection::vec((0usize..64, 0usize..6), 1..4)) {
            let m = model(seed, 6, 3);
            let internal = m.topology().internal_nodes();
            let perms = linalg::permutations(3);
            let mut relabeled = m.clone();
            for (node, p) in picks {
                relabeled = relabeled.permute_states(internal[node % internal.len()], &perms[p]);
            }
            prop_assert!(align_labels(&relabeled, &m).unwrap().max_l1 < 1e-12);
        }
    }
}
