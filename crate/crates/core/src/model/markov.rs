//! Markov models on trees: transition matrices, marginals, rerooting,
//! sampling and exact joint laws.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::rng::{substream, Domain};

use super::tree::{NodeId, TreeTopology};

/// Row sums of stored stochastic objects must be within this of 1.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Default cap on the number of entries in an exact joint table.
pub const JOINT_BUDGET: u128 = 10_000_000;

/// A row-stochastic `k x k` matrix; row `i` is the child law given parent state `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix {
    entries: Matrix,
    det_abs: f64,
}

impl TransitionMatrix {
    /// Validates nonnegativity and unit row sums.
    pub fn new(entries: Matrix) -> Result<Self> {
        let k = entries.nrows();
        if k < 2 || entries.ncols() != k {
            return Err(Error::InvalidModel(format!(
                "transition matrix must be square with k >= 2, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        for (i, row) in entries.row_iter().enumerate() {
            if row.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                return Err(Error::InvalidModel(format!("row {i} has a negative or non-finite entry")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::InvalidModel(format!("row {i} sums to {s}")));
            }
        }
        Ok(Self::new_unchecked(entries))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.iter().any(|r| r.len() != rows.len()) {
            return Err(Error::InvalidModel("transition matrix rows have unequal length".into()));
        }
        Self::new(linalg::from_rows(rows))
    }

    pub(crate) fn new_unchecked(entries: Matrix) -> Self {
        let det_abs = linalg::det(&entries).abs();
        TransitionMatrix { entries, det_abs }
    }

    /// Rescales each row to sum to one (entries are assumed nonnegative).
    pub(crate) fn renormalized(mut entries: Matrix) -> Self {
        for mut row in entries.row_iter_mut() {
            let s: f64 = row.iter().sum();
            row /= s;
        }
        Self::new_unchecked(entries)
    }

    pub fn identity(k: usize) -> Self {
        Self::new_unchecked(Matrix::identity(k, k))
    }

    pub fn k(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &Matrix {
        &self.entries
    }

    pub fn into_entries(self) -> Matrix {
        self.entries
    }

    pub fn det_abs(&self) -> f64 {
        self.det_abs
    }
}

/// Bayes reversal `P^{vu}_{ij} = pi_u(j) P^{uv}_{ji} / pi_v(i)`, rows renormalized.
pub fn bayes_reverse(p_uv: &TransitionMatrix, pi_u: &[f64], pi_v: &[f64]) -> Result<TransitionMatrix> {
    let k = p_uv.k();
    if let Some((index, &value)) = pi_v.iter().enumerate().find(|(_, &x)| !(x > 0.0)) {
        return Err(Error::ZeroMarginal { index, value });
    }
    let p = p_uv.entries();
    let rev = Matrix::from_fn(k, k, |i, j| pi_u[j] * p[(j, i)] / pi_v[i]);
    Ok(TransitionMatrix::renormalized(rev))
}

/// Thresholds of a nonsingular model.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Lower bound on every `|det P^e|` (strict).
    pub beta: f64,
    /// Every `|det P^e|` must be at most `1 - beta_prime`.
    pub beta_prime: f64,
    /// Lower bound on every node marginal entry (strict).
    pub sigma: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            beta: 0.1,
            beta_prime: 0.01,
            sigma: 0.01,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self, k: usize) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::InvalidConfig("beta must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta_prime) {
            return Err(Error::InvalidConfig("beta_prime must lie in [0, 1)".into()));
        }
        if !(self.sigma > 0.0 && self.sigma < 1.0 / k as f64) {
            return Err(Error::InvalidConfig(format!("sigma must lie in (0, 1/{k})")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EdgeCheck {
    pub edge: (NodeId, NodeId),
    pub det_abs: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeCheck {
    pub node: NodeId,
    pub min_marginal: f64,
    pub ok: bool,
}

/// Outcome of [`MarkovTreeModel::validate`].
#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub edges: Vec<EdgeCheck>,
    pub nodes: Vec<NodeCheck>,
    pub pass: bool,
}

impl ValidationReport {
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        for e in self.edges.iter().filter(|e| !e.ok) {
            out.push(format!("edge {:?}: |det| = {:e}", e.edge, e.det_abs));
        }
        for v in self.nodes.iter().filter(|v| !v.ok) {
            out.push(format!("node {}: min marginal = {:e}", v.node, v.min_marginal));
        }
        out
    }
}

/// The `m x n` matrix of leaf states; column `j` holds leaf `j + 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LeafSamples {
    m: usize,
    n: usize,
    k: usize,
    data: Vec<u16>,
}

impl LeafSamples {
    pub fn new(m: usize, n: usize, k: usize, data: Vec<u16>) -> Result<Self> {
        if data.len() != m * n {
            return Err(Error::InvalidConfig(format!(
                "sample buffer has {} entries, expected {m} x {n}",
                data.len()
            )));
        }
        if !(2..=u16::MAX as usize).contains(&k) {
            return Err(Error::InvalidConfig(format!("unsupported state count {k}")));
        }
        if let Some(pos) = data.iter().position(|&x| x as usize >= k) {
            return Err(Error::InvalidConfig(format!(
                "sample row {}, leaf {} has state {} >= k = {k}",
                pos / n,
                pos % n + 1,
                data[pos]
            )));
        }
        Ok(LeafSamples { m, n, k, data })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row(&self, r: usize) -> &[u16] {
        &self.data[r * self.n..(r + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u16]> {
        self.data.chunks(self.n.max(1))
    }

    /// State of leaf `label` (1-based) in row `r`.
    pub fn get(&self, r: usize, label: usize) -> usize {
        self.data[r * self.n + label - 1] as usize
    }
}

/// Exact probability table over an ordered node subset, row-major with the
/// first node most significant.
#[derive(Clone, Debug, PartialEq)]
pub struct JointTable {
    pub nodes: Vec<NodeId>,
    pub k: usize,
    pub probs: Vec<f64>,
}

impl JointTable {
    pub fn index(&self, states: &[usize]) -> usize {
        states.iter().fold(0, |acc, &s| acc * self.k + s)
    }

    pub fn get(&self, states: &[usize]) -> f64 {
        self.probs[self.index(states)]
    }

    /// Sums out position `pos`.
    pub fn marginalize(&self, pos: usize) -> JointTable {
        let d = self.nodes.len();
        let inner = self.k.pow((d - pos - 1) as u32);
        let outer = self.probs.len() / (inner * self.k);
        let mut probs = vec![0.0; outer * inner];
        for o in 0..outer {
            for s in 0..self.k {
                for i in 0..inner {
                    probs[o * inner + i] += self.probs[(o * self.k + s) * inner + i];
                }
            }
        }
        let mut nodes = self.nodes.clone();
        nodes.remove(pos);
        JointTable { nodes, k: self.k, probs }
    }

    /// The table as a `k x k` matrix (two-node tables only).
    pub fn as_matrix(&self) -> Matrix {
        assert_eq!(self.nodes.len(), 2);
        Matrix::from_fn(self.k, self.k, |i, j| self.probs[i * self.k + j])
    }
}

/// Topology, root, root law and one transition matrix per edge directed away from the root.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovTreeModel {
    topology: TreeTopology,
    k: usize,
    root: NodeId,
    root_dist: Vec<f64>,
    parent: Vec<Option<NodeId>>,
    // matrix on (parent[v], v), indexed by v
    edge: Vec<Option<TransitionMatrix>>,
}

impl MarkovTreeModel {
    /// `edges` maps each directed edge `(parent, child)` oriented away from `root` to its matrix.
    pub fn new(
        topology: TreeTopology,
        root: NodeId,
        root_dist: Vec<f64>,
        edges: BTreeMap<(NodeId, NodeId), TransitionMatrix>,
    ) -> Result<Self> {
        let k = root_dist.len();
        if k < 2 {
            return Err(Error::InvalidModel("need at least two states".into()));
        }
        if root >= topology.node_count() {
            return Err(Error::InvalidModel(format!("root {root} is not a node")));
        }
        check_distribution(&root_dist)?;
        let parent = topology.parents_from(root);
        let mut edge = vec![None; topology.node_count()];
        for ((u, v), p) in edges {
            if v >= topology.node_count() || parent[v] != Some(u) {
                return Err(Error::InvalidModel(format!(
                    "edge ({u}, {v}) is not an edge directed away from the root"
                )));
            }
            if p.k() != k {
                return Err(Error::InvalidModel(format!("edge ({u}, {v}) has k = {}, expected {k}", p.k())));
            }
            edge[v] = Some(p);
        }
        for v in 0..topology.node_count() {
            if let Some(u) = parent[v] {
                if edge[v].is_none() {
                    return Err(Error::InvalidModel(format!("edge ({u}, {v}) has no matrix")));
                }
            }
        }
        Ok(MarkovTreeModel {
            topology,
            k,
            root,
            root_dist,
            parent,
            edge,
        })
    }

    pub fn topology(&self) -> &TreeTopology {
        &self.topology
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn root_dist(&self) -> &[f64] {
        &self.root_dist
    }

    pub fn parent(&self, v: NodeId) -> Option<NodeId> {
        self.parent[v]
    }

    /// The stored matrix on `(u, v)`, present only when `u` is the parent of `v`.
    pub fn edge_matrix(&self, u: NodeId, v: NodeId) -> Option<&TransitionMatrix> {
        if self.parent[v] == Some(u) {
            self.edge[v].as_ref()
        } else {
            None
        }
    }

    /// Directed edges `(parent, child)` in breadth-first order from the root.
    pub fn directed_edges(&self) -> Vec<(NodeId, NodeId)> {
        self.topology
            .bfs_order(self.root)
            .into_iter()
            .filter_map(|v| self.parent[v].map(|u| (u, v)))
            .collect()
    }

    /// Marginal law of every node, indexed by node id.
    pub fn marginals(&self) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); self.topology.node_count()];
        for v in self.topology.bfs_order(self.root) {
            out[v] = match self.parent[v] {
                None => self.root_dist.clone(),
                Some(u) => linalg::vec_mat(&out[u], self.edge[v].as_ref().unwrap().entries()),
            };
        }
        out
    }

    pub fn stationary_at(&self, v: NodeId) -> Vec<f64> {
        let path = self.topology.path(self.root, v);
        let mut pi = self.root_dist.clone();
        for w in path.windows(2) {
            pi = linalg::vec_mat(&pi, self.edge[w[1]].as_ref().unwrap().entries());
        }
        pi
    }

    pub fn validate(&self, cfg: &ModelConfig) -> ValidationReport {
        let edges: Vec<EdgeCheck> = self
            .directed_edges()
            .into_iter()
            .map(|(u, v)| {
                let det_abs = self.edge[v].as_ref().unwrap().det_abs();
                EdgeCheck {
                    edge: (u, v),
                    det_abs,
                    ok: det_abs > cfg.beta && det_abs <= 1.0 - cfg.beta_prime,
                }
            })
            .collect();
        let nodes: Vec<NodeCheck> = self
            .marginals()
            .into_iter()
            .enumerate()
            .map(|(node, pi)| {
                let min_marginal = pi.iter().copied().fold(f64::INFINITY, f64::min);
                NodeCheck {
                    node,
                    min_marginal,
                    ok: min_marginal > cfg.sigma,
                }
            })
            .collect();
        let pass = edges.iter().all(|e| e.ok) && nodes.iter().all(|v| v.ok);
        ValidationReport { edges, nodes, pass }
    }

    /// Matrix of the adjacent pair `(u, v)` in that direction, reversing by Bayes rule when needed.
    pub fn directed_matrix(&self, u: NodeId, v: NodeId) -> Result<TransitionMatrix> {
        self.directed_matrix_with(u, v, &self.marginals())
    }

    fn directed_matrix_with(&self, u: NodeId, v: NodeId, marginals: &[Vec<f64>]) -> Result<TransitionMatrix> {
        if self.parent[v] == Some(u) {
            Ok(self.edge[v].clone().unwrap())
        } else if self.parent[u] == Some(v) {
            bayes_reverse(self.edge[u].as_ref().unwrap(), &marginals[v], &marginals[u])
                .map_err(|e| Error::SingularModel(format!("reversing edge ({v}, {u}): {e}")))
        } else {
            Err(Error::InvalidTopology(format!("nodes {u} and {v} are not adjacent")))
        }
    }

    /// Same joint law, rooted at `new_root`.
    pub fn reroot(&self, new_root: NodeId) -> Result<MarkovTreeModel> {
        if new_root == self.root {
            return Ok(self.clone());
        }
        let marginals = self.marginals();
        let parent = self.topology.parents_from(new_root);
        let mut edges = BTreeMap::new();
        for v in 0..self.topology.node_count() {
            if let Some(u) = parent[v] {
                edges.insert((u, v), self.directed_matrix_with(u, v, &marginals)?);
            }
        }
        MarkovTreeModel::new(self.topology.clone(), new_root, marginals[new_root].clone(), edges)
    }

    /// Product of the directed matrices along the path `u -> v`.
    pub fn path_transition(&self, u: NodeId, v: NodeId) -> Result<TransitionMatrix> {
        let marginals = self.marginals();
        let path = self.topology.path(u, v);
        let mut acc = Matrix::identity(self.k, self.k);
        for w in path.windows(2) {
            acc *= self.directed_matrix_with(w[0], w[1], &marginals)?.entries();
        }
        Ok(TransitionMatrix::new_unchecked(acc))
    }

    /// Model with the states of node `v` relabelled: new state `i` is old state `perm[i]`.
    pub fn permute_states(&self, v: NodeId, perm: &[usize]) -> MarkovTreeModel {
        let mut out = self.clone();
        if v == self.root {
            out.root_dist = perm.iter().map(|&p| self.root_dist[p]).collect();
        }
        if self.parent[v].is_some() {
            let m = self.edge[v].as_ref().unwrap().entries();
            out.edge[v] = Some(TransitionMatrix::new_unchecked(linalg::permute_columns(m, perm)));
        }
        for &w in self.topology.neighbors(v) {
            if self.parent[w] == Some(v) {
                let m = self.edge[w].as_ref().unwrap().entries();
                out.edge[w] = Some(TransitionMatrix::new_unchecked(linalg::permute_rows(m, perm)));
            }
        }
        out
    }

    /// `m` independent characters at the leaves. Row `r` uses its own substream, so
    /// the result does not depend on the thread count.
    pub fn sample(&self, m: usize, seed: u64) -> LeafSamples {
        let n = self.topology.leaf_count();
        let order = self.topology.bfs_order(self.root);
        let cumulative = |row: &[f64]| -> Vec<f64> {
            let mut acc = 0.0;
            row.iter()
                .map(|&x| {
                    acc += x;
                    acc
                })
                .collect()
        };
        let root_cdf = cumulative(&self.root_dist);
        let edge_cdf: Vec<Vec<Vec<f64>>> = self
            .edge
            .iter()
            .map(|e| match e {
                Some(p) => p
                    .entries()
                    .row_iter()
                    .map(|r| cumulative(&r.iter().copied().collect::<Vec<_>>()))
                    .collect(),
                None => Vec::new(),
            })
            .collect();
        let draw = |cdf: &[f64], u: f64| -> usize {
            let target = u * cdf[cdf.len() - 1];
            cdf.iter().position(|&c| target < c).unwrap_or(cdf.len() - 1)
        };
        let leaves = self.topology.leaves();
        let mut data = vec![0u16; m * n];
        data.par_chunks_mut(n.max(1)).enumerate().for_each_init(
            || vec![0usize; self.topology.node_count()],
            |state, (r, out)| {
                let mut rng = substream(seed, Domain::Samples, 0, r as u64);
                for &v in &order {
                    let u: f64 = rng.random();
                    state[v] = match self.parent[v] {
                        None => draw(&root_cdf, u),
                        Some(p) => draw(&edge_cdf[v][state[p]], u),
                    };
                }
                for (j, &leaf) in leaves.iter().enumerate() {
                    out[j] = state[leaf] as u16;
                }
            },
        );
        LeafSamples {
            m,
            n,
            k: self.k,
            data,
        }
    }

    pub fn exact_joint(&self, nodes: &[NodeId]) -> Result<JointTable> {
        self.exact_joint_with_budget(nodes, JOINT_BUDGET)
    }

    /// Exact table over `nodes` by upward elimination of every other node.
    pub fn exact_joint_with_budget(&self, nodes: &[NodeId], cap: u128) -> Result<JointTable> {
        let k = self.k;
        let entries = (k as u128).checked_pow(nodes.len() as u32).unwrap_or(u128::MAX);
        if entries > cap {
            return Err(Error::BudgetExceeded { entries, cap });
        }
        let mut query_pos = vec![None; self.topology.node_count()];
        for (i, &v) in nodes.iter().enumerate() {
            if query_pos[v].is_some() {
                return Err(Error::InvalidConfig(format!("node {v} requested twice")));
            }
            query_pos[v] = Some(i);
        }
        // message[v]: (query vars in subtree(v), table[x_v * size + assignment])
        let mut message: Vec<Option<(Vec<NodeId>, Vec<f64>)>> = vec![None; self.topology.node_count()];
        let order = self.topology.bfs_order(self.root);
        for &v in order.iter().rev() {
            let (mut vars, mut table) = if query_pos[v].is_some() {
                let mut t = vec![0.0; k * k];
                for x in 0..k {
                    t[x * k + x] = 1.0;
                }
                (vec![v], t)
            } else {
                (Vec::new(), vec![1.0; k])
            };
            for &c in self.topology.neighbors(v) {
                if self.parent[c] != Some(v) {
                    continue;
                }
                let (cvars, ctable) = message[c].take().unwrap();
                let csize = ctable.len() / k;
                let p = self.edge[c].as_ref().unwrap().entries();
                // edge message e[x][b] = sum_y P(x, y) m_c[y][b]
                let mut e = vec![0.0; k * csize];
                for x in 0..k {
                    for y in 0..k {
                        let pxy = p[(x, y)];
                        if pxy == 0.0 {
                            continue;
                        }
                        let src = &ctable[y * csize..(y + 1) * csize];
                        let dst = &mut e[x * csize..(x + 1) * csize];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += pxy * s;
                        }
                    }
                }
                let size = table.len() / k;
                let mut merged = vec![0.0; k * size * csize];
                for x in 0..k {
                    for a in 0..size {
                        let f = table[x * size + a];
                        let base = (x * size + a) * csize;
                        for b in 0..csize {
                            merged[base + b] = f * e[x * csize + b];
                        }
                    }
                }
                vars.extend(cvars);
                table = merged;
            }
            message[v] = Some((vars, table));
        }
        let (vars, table) = message[self.root].take().unwrap();
        let size = table.len() / k;
        let mut internal = vec![0.0; size];
        for x in 0..k {
            for a in 0..size {
                internal[a] += self.root_dist[x] * table[x * size + a];
            }
        }
        // reorder from elimination order to the requested order
        let d = nodes.len();
        let var_pos: Vec<usize> = nodes.iter().map(|v| vars.iter().position(|w| w == v).unwrap()).collect();
        let strides: Vec<usize> = (0..d).map(|i| k.pow((d - 1 - i) as u32)).collect();
        let mut probs = vec![0.0; size];
        let mut states = vec![0usize; d];
        for (out_idx, slot) in probs.iter_mut().enumerate() {
            let mut rem = out_idx;
            for i in (0..d).rev() {
                states[i] = rem % k;
                rem /= k;
            }
            let idx: usize = (0..d).map(|i| states[i] * strides[var_pos[i]]).sum();
            *slot = internal[idx];
        }
        Ok(JointTable {
            nodes: nodes.to_vec(),
            k,
            probs,
        })
    }

    /// Exact law of all leaves in label order.
    pub fn leaf_joint(&self) -> Result<JointTable> {
        let leaves = self.topology.leaves().to_vec();
        self.exact_joint(&leaves)
    }

    /// Probability of one full leaf assignment (`states[j]` for leaf `j + 1`), by pruning.
    pub fn leaf_probability(&self, states: &[usize]) -> f64 {
        let k = self.k;
        let mut like = vec![vec![1.0; k]; self.topology.node_count()];
        for (j, &leaf) in self.topology.leaves().iter().enumerate() {
            like[leaf] = (0..k).map(|x| if x == states[j] { 1.0 } else { 0.0 }).collect();
        }
        for &v in self.topology.bfs_order(self.root).iter().rev() {
            if let Some(u) = self.parent[v] {
                let p = self.edge[v].as_ref().unwrap().entries();
                let lv = like[v].clone();
                for x in 0..k {
                    like[u][x] *= (0..k).map(|y| p[(x, y)] * lv[y]).sum::<f64>();
                }
            }
        }
        (0..k).map(|x| self.root_dist[x] * like[self.root][x]).sum()
    }
}

pub(crate) fn check_distribution(p: &[f64]) -> Result<()> {
    if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidModel("distribution has a negative or non-finite entry".into()));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::InvalidModel(format!("distribution sums to {s}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tm(rows: &[[f64; 2]]) -> TransitionMatrix {
        TransitionMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    /// Star on leaves 1..3 around node 3, rooted at the centre.
    fn star(p: [TransitionMatrix; 3], root: Vec<f64>) -> MarkovTreeModel {
        let t = TreeTopology::from_edges(4, &[(0, 3), (1, 3), (2, 3)], &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let [a, b, c] = p;
        let edges = BTreeMap::from([((3, 0), a), ((3, 1), b), ((3, 2), c)]);
        MarkovTreeModel::new(t, 3, root, edges).unwrap()
    }

    fn sample_star() -> MarkovTreeModel {
        star(
            [
                tm(&[[0.9, 0.1], [0.2, 0.8]]),
                tm(&[[0.8, 0.2], [0.3, 0.7]]),
                tm(&[[0.6, 0.4], [0.25, 0.75]]),
            ],
            vec![0.3, 0.7],
        )
    }

    /// Brute force over the hidden centre state.
    fn star_joint_oracle(m: &MarkovTreeModel, x: [usize; 3]) -> f64 {
        (0..2)
            .map(|h| {
                let mut p = m.root_dist()[h];
                for (leaf, &s) in x.iter().enumerate() {
                    p *= m.edge_matrix(3, leaf).unwrap().entries()[(h, s)];
                }
                p
            })
            .sum()
    }

    #[test]
    fn marginal_after_one_edge() {
        let t = TreeTopology::parse_newick("(1,2);").unwrap();
        let m = MarkovTreeModel::new(
            t.clone(),
            t.leaf(1),
            vec![0.5, 0.5],
            BTreeMap::from([((t.leaf(1), t.leaf(2)), tm(&[[0.9, 0.1], [0.2, 0.8]]))]),
        )
        .unwrap();
        let pi = m.stationary_at(t.leaf(2));
        assert!((pi[0] - 0.55).abs() < 1e-15 && (pi[1] - 0.45).abs() < 1e-15);
        assert_eq!(m.stationary_at(t.leaf(1)), vec![0.5, 0.5]);
    }

    #[test]
    fn bayes_reverse_hand_example() {
        let p = tm(&[[0.9, 0.1], [0.2, 0.8]]);
        let r = bayes_reverse(&p, &[0.5, 0.5], &[0.55, 0.45]).unwrap();
        let want = [[9.0 / 11.0, 2.0 / 11.0], [1.0 / 9.0, 8.0 / 9.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((r.entries()[(i, j)] - want[i][j]).abs() < 1e-15);
            }
        }
        let back = bayes_reverse(&r, &[0.55, 0.45], &[0.5, 0.5]).unwrap();
        assert!(linalg::max_abs(&(back.entries() - p.entries())) < 1e-15);
        assert!(matches!(
            bayes_reverse(&p, &[0.5, 0.5], &[1.0, 0.0]),
            Err(Error::ZeroMarginal { index: 1, .. })
        ));
    }

    #[test]
    fn symmetric_reverse_is_identity_map() {
        let p = tm(&[[0.7, 0.3], [0.3, 0.7]]);
        let r = bayes_reverse(&p, &[0.5, 0.5], &[0.5, 0.5]).unwrap();
        assert!(linalg::max_abs(&(r.entries() - p.entries())) < 1e-15);
    }

    #[test]
    fn validation_hand_examples() {
        let p = tm(&[[0.9, 0.1], [0.2, 0.8]]);
        let m = star([p.clone(), p.clone(), p], vec![0.5, 0.5]);
        let cfg = ModelConfig {
            beta: 0.5,
            beta_prime: 0.1,
            sigma: 0.1,
        };
        let report = m.validate(&cfg);
        assert!(report.pass, "{:?}", report.failures());
        assert!((report.edges[0].det_abs - 0.7).abs() < 1e-14);

        let id = TransitionMatrix::identity(2);
        let m = star([id.clone(), id.clone(), id], vec![0.5, 0.5]);
        let cfg = ModelConfig {
            beta: 0.1,
            beta_prime: 0.01,
            sigma: 0.1,
        };
        assert!(!m.validate(&cfg).pass);

        let flat = tm(&[[0.4, 0.6], [0.4, 0.6]]);
        let m = star([flat, tm(&[[0.9, 0.1], [0.2, 0.8]]), tm(&[[0.9, 0.1], [0.2, 0.8]])], vec![0.5, 0.5]);
        let report = m.validate(&cfg);
        assert!(!report.pass);
        assert!(report.edges.iter().any(|e| !e.ok && e.det_abs < 1e-15));
    }

    #[test]
    fn star_joint_matches_brute_force() {
        let m = sample_star();
        let j = m.leaf_joint().unwrap();
        let mut total = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    let want = star_joint_oracle(&m, [a, b, c]);
                    assert!((j.get(&[a, b, c]) - want).abs() < 1e-15);
                    assert!((m.leaf_probability(&[a, b, c]) - want).abs() < 1e-15);
                    total += want;
                }
            }
        }
        assert!((total - 1.0).abs() < 1e-12);
        let single = m.exact_joint(&[3]).unwrap();
        assert!((single.probs[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn joint_respects_requested_order_and_marginalization() {
        let m = sample_star();
        let abc = m.exact_joint(&[0, 1, 2]).unwrap();
        let cab = m.exact_joint(&[2, 0, 1]).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    assert_eq!(abc.get(&[a, b, c]), cab.get(&[c, a, b]));
                }
            }
        }
        let ab = m.exact_joint(&[0, 1]).unwrap();
        let marg = abc.marginalize(2);
        for (x, y) in ab.probs.iter().zip(&marg.probs) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn budget_is_enforced() {
        let m = sample_star();
        assert!(matches!(
            m.exact_joint_with_budget(&[0, 1, 2], 7),
            Err(Error::BudgetExceeded { entries: 8, cap: 7 })
        ));
    }

    #[test]
    fn reroot_preserves_leaf_law() {
        let m = sample_star();
        let before = m.leaf_joint().unwrap();
        for r in 0..4 {
            let after = m.reroot(r).unwrap().leaf_joint().unwrap();
            for (x, y) in before.probs.iter().zip(&after.probs) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        assert_eq!(m.reroot(3).unwrap(), m);
    }

    #[test]
    fn identity_model_reroots_to_identity() {
        let id = TransitionMatrix::identity(2);
        let m = star([id.clone(), id.clone(), id], vec![0.4, 0.6]).reroot(0).unwrap();
        for (u, v) in m.directed_edges() {
            assert!(linalg::max_abs(&(m.edge_matrix(u, v).unwrap().entries() - Matrix::identity(2, 2))) < 1e-15);
        }
    }

    #[test]
    fn path_determinant_is_multiplicative() {
        let t = TreeTopology::parse_newick("(1,2,3);").unwrap();
        let c = t.internal_nodes()[0];
        let edges = BTreeMap::from([
            ((t.leaf(1), c), tm(&[[0.9, 0.1], [0.2, 0.8]])),
            ((c, t.leaf(2)), tm(&[[0.75, 0.25], [0.25, 0.75]])),
            ((c, t.leaf(3)), tm(&[[0.6, 0.4], [0.3, 0.7]])),
        ]);
        let m = MarkovTreeModel::new(t.clone(), t.leaf(1), vec![0.5, 0.5], edges).unwrap();
        let p = m.path_transition(t.leaf(1), t.leaf(2)).unwrap();
        assert!((p.det_abs() - 0.35).abs() < 1e-10);
        let single = m.path_transition(c, t.leaf(3)).unwrap();
        assert_eq!(single, *m.edge_matrix(c, t.leaf(3)).unwrap());
    }

    #[test]
    fn samples_are_deterministic_and_consistent() {
        let m = sample_star();
        let a = m.sample(1000, 11);
        assert_eq!(a, m.sample(1000, 11));
        assert_ne!(a, m.sample(1000, 12));

        let big = m.sample(100_000, 3);
        let marg = m.marginals();
        for label in 1..=3 {
            let leaf = m.topology().leaf(label);
            for i in 0..2 {
                let count = (0..big.m()).filter(|&r| big.get(r, label) == i).count();
                let freq = count as f64 / big.m() as f64;
                let p = marg[leaf][i];
                assert!((freq - p).abs() < 4.0 * (p * (1.0 - p) / big.m() as f64).sqrt());
            }
        }
        let pair = m.exact_joint(&[0, 1]).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                let count = (0..big.m()).filter(|&r| big.get(r, 1) == a && big.get(r, 2) == b).count();
                let p = pair.get(&[a, b]);
                let freq = count as f64 / big.m() as f64;
                assert!((freq - p).abs() < 4.0 * (p * (1.0 - p) / big.m() as f64).sqrt());
            }
        }
    }

    #[test]
    fn point_mass_identity_model_samples_zero() {
        let id = TransitionMatrix::identity(2);
        let m = star([id.clone(), id.clone(), id], vec![1.0, 0.0]);
        assert!(m.sample(200, 5).rows().all(|r| r.iter().all(|&x| x == 0)));
    }

    proptest! {
        #[test]
        fn internal_relabelling_keeps_leaf_law(seed in 0u64..500, swap in any::<bool>()) {
            use crate::model::generate::{random_model, GeneratorConfig, Shape};
            let cfg = GeneratorConfig { n: 5, k: 3, shape: Shape::Binary, det_lo: 0.3, det_hi: 0.9, sigma: 0.02, ..GeneratorConfig::default() };
            let m = random_model(&cfg, seed).unwrap();
            let v = m.topology().internal_nodes()[usize::from(swap)];
            let relabelled = m.permute_states(v, &[2, 0, 1]);
            let a = m.leaf_joint().unwrap();
            let b = relabelled.leaf_joint().unwrap();
            for (x, y) in a.probs.iter().zip(&b.probs) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn reroot_invariance_on_random_models(seed in 0u64..500, k in 2usize..5) {
            use crate::model::generate::{random_model, GeneratorConfig, Shape};
            let cfg = GeneratorConfig { n: 6, k, shape: Shape::Binary, det_lo: 0.2, det_hi: 0.95, sigma: 0.01, ..GeneratorConfig::default() };
            let m = random_model(&cfg, seed).unwrap();
            let a = m.leaf_joint().unwrap();
            let r = (seed as usize) % m.topology().node_count();
            let b = m.reroot(r).unwrap().leaf_joint().unwrap();
            for (x, y) in a.probs.iter().zip(&b.probs) {
                prop_assert!((x - y).abs() < 1e-10);
            }
            let marg = m.marginals();
            for v in 0..m.topology().node_count() {
                prop_assert!(marg[v].iter().all(|&p| p > cfg.sigma));
                prop_assert!((marg[v].iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn path_determinants_multiply(seed in 0u64..500) {
            use crate::model::generate::{random_model, GeneratorConfig, Shape};
            let cfg = GeneratorConfig { n: 7, k: 3, shape: Shape::Binary, det_lo: 0.3, det_hi: 0.9, sigma: 0.02, ..GeneratorConfig::default() };
            let m = random_model(&cfg, seed).unwrap();
            let t = m.topology();
            let (a, b) = (t.leaf(1), t.leaf(7));
            let path = t.path(a, b);
            let expected: f64 = path.windows(2).map(|w| m.directed_matrix(w[0], w[1]).unwrap().det_abs()).product();
            let got = m.path_transition(a, b).unwrap().det_abs();
            prop_assert!(((got - expected) / expected).abs() < 1e-8);
        }
    }
}
