//! Recovery of every transition matrix on a known binary topology.
//!
//! The tree is covered by subtrees, each explored breadth-first from a
//! reference leaf within the depth ball. Edges inside a subtree come from
//! spectral decompositions against the reference; the edges joining two
//! subtrees (separators) are patched from the pair law of their references.

mod partition;
#[cfg(test)]
mod tests;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

pub use partition::{closest_leaf, depth, leaf_distance_avoiding};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::model::{bayes_reverse, MarkovTreeModel, NodeId, TransitionMatrix, TreeTopology};
use crate::spectral::{chang_decompose, stochastic_project, DecomposeInput, MomentSource, SpectralConfig};

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct LearnerConfig {
    pub spectral: SpectralConfig,
    /// Lenient mode clips estimated marginals at `sigma / 2`.
    pub sigma: f64,
    /// Fail on non-positive estimated marginals instead of clipping.
    pub strict: bool,
    pub probe_seed: u64,
    /// Replaces the topology depth as the exploration radius.
    pub depth_override: Option<usize>,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            spectral: SpectralConfig::default(),
            sigma: 0.01,
            strict: false,
            probe_seed: 0,
            depth_override: None,
        }
    }
}

impl LearnerConfig {
    /// Defaults for `m` samples over `k` states.
    pub fn sampled(k: usize, m: usize, probe_seed: u64) -> Self {
        LearnerConfig {
            spectral: SpectralConfig::sampled(k, m),
            probe_seed,
            ..LearnerConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spectral.validate()?;
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return Err(Error::InvalidConfig(format!("sigma must lie in (0, 1), got {}", self.sigma)));
        }
        Ok(())
    }
}

/// A boundary edge between the subtree of `old_reference` (holding `w_prime`)
/// and the subtree of `new_reference` (holding `w`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Separator {
    pub old_reference: usize,
    pub new_reference: usize,
    pub w: NodeId,
    pub w_prime: NodeId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Subtree {
    pub reference: usize,
    /// Nodes in discovery order, the reference leaf first.
    pub nodes: Vec<NodeId>,
    /// Indices into the separator list registered by this subtree.
    pub new_separators: Vec<usize>,
}

/// How the forward matrix of an edge was obtained.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EdgeSource {
    /// Decomposition against the reference with probe leaves `(b, c)`.
    Spectral { probes: (usize, usize), decomposition: u64 },
    /// Pair law between the reference and a leaf.
    Leaf,
    /// Separator patch between two subtrees.
    Separator { old_reference: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdgeDiagnostics {
    /// Direction in which the matrix was estimated.
    pub edge: (NodeId, NodeId),
    pub reference: usize,
    pub source: EdgeSource,
    pub retries: usize,
    /// `|det|` of the pair matrix fed to the decomposition or patch.
    pub pair_det: f64,
    pub residual: f64,
    /// Smallest `|det|` among the matrices inverted for this edge.
    pub factor_det: f64,
    /// Entrywise L1 change made by the stochastic projection.
    pub projection_correction: f64,
}

/// Where the state labels of an internal node come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LabelRecord {
    pub reference: usize,
    pub decomposition: u64,
}

/// Bookkeeping of the subtree partition.
#[derive(Clone, Debug)]
pub struct PartitionState {
    pub depth: usize,
    pub subtrees: Vec<Subtree>,
    pub separators: Vec<Separator>,
    /// Separators whose new subtree has not been explored yet.
    pub pending: VecDeque<usize>,
    separator_edges: BTreeSet<(NodeId, NodeId)>,
    owner: Vec<Option<usize>>,
    /// `P~^{a v}` for the reference `a` of the subtree owning `v`.
    from_reference: Vec<Option<Matrix>>,
    marginals: Vec<Option<Vec<f64>>>,
    directed: BTreeMap<(NodeId, NodeId), TransitionMatrix>,
    edges: Vec<EdgeDiagnostics>,
    labels: BTreeMap<NodeId, LabelRecord>,
    next_decomposition: u64,
}

impl PartitionState {
    pub fn new(topology: &TreeTopology, depth: usize) -> Self {
        let n = topology.node_count();
        PartitionState {
            depth,
            subtrees: Vec::new(),
            separators: Vec::new(),
            pending: VecDeque::new(),
            separator_edges: BTreeSet::new(),
            owner: vec![None; n],
            from_reference: vec![None; n],
            marginals: vec![None; n],
            directed: BTreeMap::new(),
            edges: Vec::new(),
            labels: BTreeMap::new(),
            next_decomposition: 0,
        }
    }

    pub fn is_separator(&self, u: NodeId, v: NodeId) -> bool {
        self.separator_edges.contains(&(u.min(v), u.max(v)))
    }

    /// Subtree index owning `v`, once explored.
    pub fn owner(&self, v: NodeId) -> Option<usize> {
        self.owner[v]
    }

    pub fn marginal(&self, v: NodeId) -> Option<&[f64]> {
        self.marginals[v].as_deref()
    }

    pub fn directed(&self, u: NodeId, v: NodeId) -> Option<&TransitionMatrix> {
        self.directed.get(&(u, v))
    }

    /// Undirected edges lacking a matrix in either direction.
    pub fn uncovered(&self, topology: &TreeTopology) -> Vec<(NodeId, NodeId)> {
        topology
            .edges()
            .into_iter()
            .filter(|&(u, v)| !(self.directed.contains_key(&(u, v)) && self.directed.contains_key(&(v, u))))
            .collect()
    }

    fn register_separator(&mut self, sep: Separator) -> usize {
        self.separator_edges.insert((sep.w.min(sep.w_prime), sep.w.max(sep.w_prime)));
        self.separators.push(sep);
        let idx = self.separators.len() - 1;
        self.pending.push_back(idx);
        idx
    }
}

/// Full output of [`fullrecon`].
#[derive(Clone, Debug)]
pub struct ReconstructionResult {
    /// Rooted at the first reference leaf with its empirical marginal.
    ///
    /// Internal state labels match the truth only up to a per-node permutation.
    pub model_hat: MarkovTreeModel,
    pub depth: usize,
    pub subtrees: Vec<Subtree>,
    pub separators: Vec<Separator>,
    /// Both directions of every edge.
    pub directed: BTreeMap<(NodeId, NodeId), TransitionMatrix>,
    /// Estimated marginal of every node.
    pub marginals: Vec<Vec<f64>>,
    pub edges: Vec<EdgeDiagnostics>,
    pub labels: BTreeMap<NodeId, LabelRecord>,
}

impl ReconstructionResult {
    pub fn total_retries(&self) -> usize {
        self.edges.iter().map(|e| e.retries).sum()
    }
}

fn finish_marginal(node: NodeId, raw: Vec<f64>, cfg: &LearnerConfig) -> Result<Vec<f64>> {
    if cfg.strict {
        if let Some(&value) = raw.iter().find(|&&x| !(x > 0.0)) {
            return Err(Error::MarginalDegenerate { node, value });
        }
        return Ok(raw);
    }
    let floor = cfg.sigma / 2.0;
    let clipped: Vec<f64> = raw.iter().map(|&x| if x > floor { x } else { floor }).collect();
    let s: f64 = clipped.iter().sum();
    Ok(clipped.into_iter().map(|x| x / s).collect())
}

fn checked_inverse(m: &Matrix, which: impl FnOnce() -> String, floor: f64) -> Result<(Matrix, f64)> {
    let d = linalg::det(m).abs();
    if !(d >= floor) {
        return Err(Error::IllConditionedFactor { which: which(), det: d });
    }
    let inv = linalg::inverse(m).ok_or_else(|| Error::IllConditionedFactor { which: "inverse".into(), det: d })?;
    Ok((inv, d))
}

fn project_with_correction(raw: &Matrix) -> Result<(TransitionMatrix, f64)> {
    let p = stochastic_project(raw)?;
    let correction = linalg::entrywise_l1(&(raw - p.entries()));
    Ok((p, correction))
}

/// Explores the subtree of reference leaf `a`, filling `state` with its
/// matrices and marginals and registering the separators on its boundary.
///
/// Returns the index of the new subtree.
pub fn leafrecon(
    topology: &TreeTopology,
    moments: &(impl MomentSource + ?Sized),
    a: usize,
    state: &mut PartitionState,
    cfg: &LearnerConfig,
) -> Result<usize> {
    let k = moments.k();
    let a_node = topology.leaf(a);
    let subtree = state.subtrees.len();
    let floor = cfg.spectral.cond_floor;
    let pi_a = finish_marginal(a_node, moments.marginal(a)?, cfg)?;
    let raw_pi_a = moments.marginal(a)?;
    state.owner[a_node] = Some(subtree);
    state.from_reference[a_node] = Some(Matrix::identity(k, k));
    state.marginals[a_node] = Some(pi_a);
    let mut nodes = vec![a_node];
    let mut new_separators = Vec::new();
    let mut dist = vec![usize::MAX; topology.node_count()];
    dist[a_node] = 0;
    let mut queue = VecDeque::from([a_node]);
    while let Some(r0) = queue.pop_front() {
        if dist[r0] >= state.depth {
            continue;
        }
        for &r in topology.neighbors(r0) {
            if state.owner[r].is_some() || state.is_separator(r0, r) {
                continue;
            }
            dist[r] = dist[r0] + 1;
            recover_node(topology, moments, a, r0, r, subtree, &raw_pi_a, state, cfg, floor)
                .map_err(|e| e.at_edge(r0, r))?;
            nodes.push(r);
            if !topology.is_leaf(r) && dist[r] == state.depth {
                for &ri in topology.neighbors(r) {
                    if ri == r0 || state.is_separator(r, ri) {
                        continue;
                    }
                    let (reference, _) = closest_leaf(topology, ri, (ri, r))?;
                    let idx = state.register_separator(Separator {
                        old_reference: a,
                        new_reference: reference,
                        w: ri,
                        w_prime: r,
                    });
                    new_separators.push(idx);
                }
            }
            queue.push_back(r);
        }
    }
    state.subtrees.push(Subtree {
        reference: a,
        nodes,
        new_separators,
    });
    Ok(subtree)
}

#[allow(clippy::too_many_arguments)]
fn recover_node(
    topology: &TreeTopology,
    moments: &(impl MomentSource + ?Sized),
    a: usize,
    r0: NodeId,
    r: NodeId,
    subtree: usize,
    raw_pi_a: &[f64],
    state: &mut PartitionState,
    cfg: &LearnerConfig,
    floor: f64,
) -> Result<()> {
    let p_ar0 = state.from_reference[r0].clone().expect("parent recovered before child");
    let (source, p_ar, retries, pair_det, residual) = match topology.label(r) {
        Some(leaf) => {
            let p = moments.pair(a, leaf)?;
            let d = linalg::det(&p).abs();
            if !(d >= floor) {
                return Err(Error::IllConditionedPair { a, b: leaf, det: d });
            }
            (EdgeSource::Leaf, p, 0, d, 0.0)
        }
        None => {
            let others: Vec<NodeId> = topology.neighbors(r).iter().copied().filter(|&x| x != r0).collect();
            let (b, _) = closest_leaf(topology, others[0], (others[0], r))?;
            let (c, _) = closest_leaf(topology, others[1], (others[1], r))?;
            let pair = moments.pair(a, b)?;
            let slices = moments.triple(a, b, c)?;
            let index = state.next_decomposition;
            state.next_decomposition += 1;
            let (x, diag) = chang_decompose(
                DecomposeInput {
                    leaves: (a, b),
                    pair: &pair,
                    slices: &slices,
                    probe_seed: cfg.probe_seed,
                    index,
                    min_count: moments.min_count(a),
                },
                &cfg.spectral,
            )?;
            state.labels.insert(
                r,
                LabelRecord {
                    reference: a,
                    decomposition: index,
                },
            );
            (
                EdgeSource::Spectral {
                    probes: (b, c),
                    decomposition: index,
                },
                x,
                diag.retries(),
                diag.pair_det,
                diag.residual,
            )
        }
    };
    let (inv, factor_det) = if state.from_reference[r0].is_some() && topology.label(r0) == Some(a) {
        (Matrix::identity(p_ar0.nrows(), p_ar0.nrows()), 1.0)
    } else {
        checked_inverse(&p_ar0, || format!("P~ from leaf {a} to node {r0}"), floor)?
    };
    let (forward, projection_correction) = project_with_correction(&(inv * &p_ar))?;
    let pi_r = finish_marginal(r, linalg::vec_mat(raw_pi_a, &p_ar), cfg)?;
    let pi_r0 = state.marginals[r0].clone().expect("parent marginal recorded");
    let backward = bayes_reverse(&forward, &pi_r0, &pi_r)?;
    state.directed.insert((r0, r), forward);
    state.directed.insert((r, r0), backward);
    state.from_reference[r] = Some(p_ar);
    state.marginals[r] = Some(pi_r);
    state.owner[r] = Some(subtree);
    state.edges.push(EdgeDiagnostics {
        edge: (r0, r),
        reference: a,
        source,
        retries,
        pair_det,
        residual,
        factor_det,
        projection_correction,
    });
    Ok(())
}

/// Output of [`seprecon`].
#[derive(Clone, Debug)]
pub struct SeparatorPatch {
    /// `P~^{w w'}`.
    pub forward: TransitionMatrix,
    /// `P~^{w' w}`.
    pub backward: TransitionMatrix,
    pub pair_det: f64,
    pub factor_det: f64,
    pub projection_correction: f64,
}

/// `P~^{ww'} = (P~^{aw})^{-1} P^^{aa'} (P~^{w'a'})^{-1}`, projected, and its Bayes reverse.
///
/// `a` is the reference on the `w` side, `a'` the one on the `w'` side.
#[allow(clippy::too_many_arguments)]
pub fn seprecon(
    moments: &(impl MomentSource + ?Sized),
    a: usize,
    a_prime: usize,
    p_aw: &Matrix,
    p_wprime_aprime: &Matrix,
    pi_w: &[f64],
    pi_wprime: &[f64],
    cfg: &LearnerConfig,
) -> Result<SeparatorPatch> {
    let floor = cfg.spectral.cond_floor;
    let (inv_left, d_left) = checked_inverse(p_aw, || format!("P~ from leaf {a} to the separator"), floor)?;
    let (inv_right, d_right) =
        checked_inverse(p_wprime_aprime, || format!("P~ from the separator to leaf {a_prime}"), floor)?;
    let pair = moments.pair(a, a_prime)?;
    let raw = inv_left * &pair * inv_right;
    let (forward, projection_correction) = project_with_correction(&raw)?;
    let backward = bayes_reverse(&forward, pi_w, pi_wprime)?;
    Ok(SeparatorPatch {
        forward,
        backward,
        pair_det: linalg::det(&pair).abs(),
        factor_det: d_left.min(d_right),
        projection_correction,
    })
}

fn patch_separator(
    topology: &TreeTopology,
    moments: &(impl MomentSource + ?Sized),
    sep: Separator,
    state: &mut PartitionState,
    cfg: &LearnerConfig,
) -> Result<()> {
    let Separator {
        old_reference,
        new_reference,
        w,
        w_prime,
    } = sep;
    let missing = || Error::CoverageFailure { uncovered: 1 };
    let p_aw = state.from_reference[w].clone().ok_or_else(missing)?;
    let p_old = state.from_reference[w_prime].clone().ok_or_else(missing)?;
    let pi_old = state.marginals[topology.leaf(old_reference)].clone().ok_or_else(missing)?;
    let pi_w = state.marginals[w].clone().ok_or_else(missing)?;
    let pi_wprime = state.marginals[w_prime].clone().ok_or_else(missing)?;
    // P~^{w'a'} from the old subtree, reversed on its recovered marginals
    let p_old = stochastic_project(&p_old)?;
    let p_wprime_aprime = bayes_reverse(&p_old, &pi_old, &pi_wprime)?;
    let patch = seprecon(
        moments,
        new_reference,
        old_reference,
        &p_aw,
        p_wprime_aprime.entries(),
        &pi_w,
        &pi_wprime,
        cfg,
    )?;
    state.directed.insert((w, w_prime), patch.forward);
    state.directed.insert((w_prime, w), patch.backward);
    state.edges.push(EdgeDiagnostics {
        edge: (w, w_prime),
        reference: new_reference,
        source: EdgeSource::Separator { old_reference },
        retries: 0,
        pair_det: patch.pair_det,
        residual: 0.0,
        factor_det: patch.factor_det,
        projection_correction: patch.projection_correction,
    });
    Ok(())
}

/// Recovers a model on `topology` from leaf moments.
///
/// Exploration starts at the lowest leaf label; separators are processed in
/// discovery order, each after the subtree of its new reference.
pub fn fullrecon(
    topology: &TreeTopology,
    moments: &(impl MomentSource + ?Sized),
    cfg: &LearnerConfig,
) -> Result<ReconstructionResult> {
    cfg.validate()?;
    if !topology.is_binary() {
        return Err(Error::InvalidTopology(
            "matrix recovery needs a binary topology; contracted edges must be resolved first".into(),
        ));
    }
    if moments.leaf_count() != topology.leaf_count() {
        return Err(Error::TopologyMismatch(format!(
            "moments cover {} leaves, topology has {}",
            moments.leaf_count(),
            topology.leaf_count()
        )));
    }
    let depth = cfg.depth_override.unwrap_or_else(|| depth(topology)).max(1);
    let mut state = PartitionState::new(topology, depth);
    let first = 1;
    leafrecon(topology, moments, first, &mut state, cfg)?;
    while let Some(idx) = state.pending.pop_front() {
        let sep = state.separators[idx];
        leafrecon(topology, moments, sep.new_reference, &mut state, cfg)?;
        patch_separator(topology, moments, sep, &mut state, cfg).map_err(|e| e.at_edge(sep.w, sep.w_prime))?;
    }
    let uncovered = state.uncovered(topology);
    if !uncovered.is_empty() {
        return Err(Error::CoverageFailure {
            uncovered: uncovered.len(),
        });
    }
    let root = topology.leaf(first);
    let parent = topology.parents_from(root);
    let mut edges = BTreeMap::new();
    for v in 0..topology.node_count() {
        if let Some(u) = parent[v] {
            edges.insert((u, v), state.directed[&(u, v)].clone());
        }
    }
    let root_dist = moments.marginal(first)?;
    let model_hat = MarkovTreeModel::new(topology.clone(), root, root_dist, edges)?;
    Ok(ReconstructionResult {
        model_hat,
        depth,
        subtrees: state.subtrees,
        separators: state.separators,
        directed: state.directed,
        marginals: state.marginals.into_iter().map(|m| m.unwrap_or_default()).collect(),
        edges: state.edges,
        labels: state.labels,
    })
}
