//! Leaf-labelled undirected trees and their Newick representation.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

pub type NodeId = usize;

/// A bipartition of the leaf labels, stored as the side that does not contain label 1.
pub type Split = Vec<usize>;

/// Structural class a topology is checked against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TopologyKind {
    /// Every internal node has degree exactly 3.
    Binary,
    /// Internal degrees are at least 3 (output of edge contraction).
    Contracted,
    /// Internal nodes induce a path.
    Caterpillar,
}

/// An unrooted tree whose degree-one nodes carry the labels `1..=n`.
///
/// Nodes are dense indices `0..node_count`. Adjacency lists are kept sorted so
/// that every traversal is deterministic.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeTopology {
    adjacency: Vec<Vec<NodeId>>,
    names: Vec<String>,
    leaf_nodes: Vec<NodeId>,
    labels: Vec<Option<usize>>,
}

impl TreeTopology {
    /// Builds a topology from an edge list; `leaf_labels` pairs each leaf node with its label.
    pub fn from_edges(
        node_count: usize,
        edges: &[(NodeId, NodeId)],
        leaf_labels: &[(NodeId, usize)],
    ) -> Result<Self> {
        if node_count < 2 {
            return Err(Error::InvalidTopology("a tree needs at least two nodes".into()));
        }
        if edges.len() != node_count - 1 {
            return Err(Error::InvalidTopology(format!(
                "{} edges for {} nodes (expected {})",
                edges.len(),
                node_count,
                node_count - 1
            )));
        }
        let mut adjacency = vec![Vec::new(); node_count];
        for &(u, v) in edges {
            if u >= node_count || v >= node_count || u == v {
                return Err(Error::InvalidTopology(format!("bad edge ({u}, {v})")));
            }
            if adjacency[u].contains(&v) {
                return Err(Error::InvalidTopology(format!("duplicate edge ({u}, {v})")));
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        let mut labels = vec![None; node_count];
        let n = leaf_labels.len();
        let mut leaf_nodes = vec![usize::MAX; n];
        for &(node, label) in leaf_labels {
            if node >= node_count {
                return Err(Error::InvalidTopology(format!("leaf node {node} out of range")));
            }
            if label == 0 || label > n || leaf_nodes[label - 1] != usize::MAX {
                return Err(Error::InvalidTopology(format!(
                    "leaf labels must be exactly 1..={n}; got duplicate or out-of-range {label}"
                )));
            }
            if labels[node].is_some() {
                return Err(Error::InvalidTopology(format!("node {node} labelled twice")));
            }
            labels[node] = Some(label);
            leaf_nodes[label - 1] = node;
        }
        let names = (0..node_count)
            .map(|v| match labels[v] {
                Some(l) => l.to_string(),
                None => format!("v{v}"),
            })
            .collect();
        let topo = TreeTopology {
            adjacency,
            names,
            leaf_nodes,
            labels,
        };
        topo.check_structure()?;
        Ok(topo)
    }

    fn check_structure(&self) -> Result<()> {
        let seen = self.bfs_order(0);
        if seen.len() != self.node_count() {
            return Err(Error::InvalidTopology("graph is not connected".into()));
        }
        for v in 0..self.node_count() {
            let deg = self.degree(v);
            match (deg, self.labels[v]) {
                (1, Some(_)) => {}
                (1, None) => {
                    return Err(Error::InvalidTopology(format!(
                        "degree-one node {} has no leaf label",
                        self.names[v]
                    )))
                }
                (_, Some(l)) => {
                    return Err(Error::InvalidTopology(format!(
                        "leaf label {l} sits on a node of degree {deg}"
                    )))
                }
                (d, None) if d < 3 => {
                    return Err(Error::InvalidTopology(format!(
                        "internal node {} has degree {d} (< 3)",
                        self.names[v]
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Replaces node names; names must be unique and leaf names must equal their labels.
    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.node_count() {
            return Err(Error::InvalidTopology("name count differs from node count".into()));
        }
        let unique: BTreeSet<&String> = names.iter().collect();
        if unique.len() != names.len() {
            return Err(Error::InvalidTopology("node names must be unique".into()));
        }
        for (v, name) in names.iter().enumerate() {
            if let Some(l) = self.labels[v] {
                if name.parse::<usize>().ok() != Some(l) {
                    return Err(Error::InvalidTopology(format!(
                        "leaf {l} must be named by its label, got {name:?}"
                    )));
                }
            }
            if name.is_empty() || name.contains(|c: char| "(),:; \t\n".contains(c)) {
                return Err(Error::InvalidTopology(format!("unusable node name {name:?}")));
            }
        }
        self.names = names;
        Ok(self)
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.node_count() - 1
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_nodes.len()
    }

    pub fn neighbors(&self, v: NodeId) -> &[NodeId] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.adjacency[v].len()
    }

    pub fn is_leaf(&self, v: NodeId) -> bool {
        self.labels[v].is_some()
    }

    pub fn label(&self, v: NodeId) -> Option<usize> {
        self.labels[v]
    }

    /// Node carrying leaf `label` (1-based).
    pub fn leaf(&self, label: usize) -> NodeId {
        self.leaf_nodes[label - 1]
    }

    /// Leaf nodes in label order.
    pub fn leaves(&self) -> &[NodeId] {
        &self.leaf_nodes
    }

    pub fn internal_nodes(&self) -> Vec<NodeId> {
        (0..self.node_count()).filter(|&v| !self.is_leaf(v)).collect()
    }

    pub fn name(&self, v: NodeId) -> &str {
        &self.names[v]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn node_by_name(&self, name: &str) -> Option<NodeId> {
        self.names.iter().position(|n| n == name)
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.adjacency[u].binary_search(&v).is_ok()
    }

    /// Undirected edges as `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for u in 0..self.node_count() {
            for &v in &self.adjacency[u] {
                if u < v {
                    out.push((u, v));
                }
            }
        }
        out
    }

    pub fn is_binary(&self) -> bool {
        (0..self.node_count()).all(|v| self.is_leaf(v) || self.degree(v) == 3)
    }

    pub fn is_caterpillar(&self) -> bool {
        let internal = self.internal_nodes();
        let mut endpoints = 0;
        for &v in &internal {
            let d = self.adjacency[v].iter().filter(|&&w| !self.is_leaf(w)).count();
            match d {
                0 | 1 => endpoints += 1,
                2 => {}
                _ => return false,
            }
        }
        internal.len() <= 1 || endpoints == 2
    }

    pub fn validate_kind(&self, kind: TopologyKind) -> Result<()> {
        let ok = match kind {
            TopologyKind::Binary => self.is_binary(),
            TopologyKind::Contracted => true,
            TopologyKind::Caterpillar => self.is_caterpillar(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidTopology(format!("tree is not {kind:?}")))
        }
    }

    /// Nodes in breadth-first order from `start`, neighbours visited by increasing id.
    pub fn bfs_order(&self, start: NodeId) -> Vec<NodeId> {
        let mut seen = vec![false; self.node_count()];
        let mut order = Vec::with_capacity(self.node_count());
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in &self.adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        order
    }

    /// Parent of every node when the tree hangs from `root` (`None` for the root).
    pub fn parents_from(&self, root: NodeId) -> Vec<Option<NodeId>> {
        let mut parent = vec![None; self.node_count()];
        for v in self.bfs_order(root) {
            for &w in &self.adjacency[v] {
                if w != root && parent[w].is_none() && parent[v] != Some(w) {
                    parent[w] = Some(v);
                }
            }
        }
        parent
    }

    /// Hop distances from `start`.
    pub fn distances_from(&self, start: NodeId) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.node_count()];
        dist[start] = 0;
        for v in self.bfs_order(start) {
            for &w in &self.adjacency[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                }
            }
        }
        dist
    }

    /// The node sequence of the unique path from `u` to `v`, both ends included.
    pub fn path(&self, u: NodeId, v: NodeId) -> Vec<NodeId> {
        let parent = self.parents_from(v);
        let mut out = vec![u];
        let mut cur = u;
        while cur != v {
            cur = parent[cur].expect("tree is connected");
            out.push(cur);
        }
        out
    }

    /// Leaf labels reachable from `to` without crossing the edge `(from, to)`.
    pub fn side_labels(&self, from: NodeId, to: NodeId) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![(to, from)];
        while let Some((v, prev)) = stack.pop() {
            if let Some(l) = self.labels[v] {
                out.push(l);
            }
            for &w in &self.adjacency[v] {
                if w != prev {
                    stack.push((w, v));
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Canonical split induced by the edge `(u, v)`.
    pub fn edge_split(&self, u: NodeId, v: NodeId) -> Split {
        let side = self.side_labels(u, v);
        if side.first() == Some(&1) {
            self.side_labels(v, u)
        } else {
            side
        }
    }

    /// Splits of the internal edges (both sides hold at least two leaves).
    pub fn internal_splits(&self) -> BTreeSet<Split> {
        let n = self.leaf_count();
        self.edges()
            .into_iter()
            .map(|(u, v)| self.edge_split(u, v))
            .filter(|s| s.len() >= 2 && n - s.len() >= 2)
            .collect()
    }

    /// Equality up to isomorphism fixing the leaf labels.
    pub fn same_topology(&self, other: &TreeTopology) -> bool {
        self.leaf_count() == other.leaf_count() && self.internal_splits() == other.internal_splits()
    }

    /// Maps every node of `self` to the corresponding node of `other`, when the
    /// two trees are the same up to leaf-preserving isomorphism.
    pub fn node_correspondence(&self, other: &TreeTopology) -> Option<Vec<NodeId>> {
        if self.leaf_count() != other.leaf_count() || self.node_count() != other.node_count() {
            return None;
        }
        let signature = |t: &TreeTopology, v: NodeId| -> Vec<Split> {
            let mut s: Vec<Split> = t.adjacency[v].iter().map(|&w| t.edge_split(v, w)).collect();
            s.sort();
            s
        };
        let mut index: BTreeMap<Vec<Split>, NodeId> = BTreeMap::new();
        for v in other.internal_nodes() {
            index.insert(signature(other, v), v);
        }
        let mut map = vec![usize::MAX; self.node_count()];
        for v in 0..self.node_count() {
            map[v] = match self.labels[v] {
                Some(l) => other.leaf(l),
                None => *index.get(&signature(self, v))?,
            };
        }
        Some(map)
    }

    /// Quartet split of four leaf labels induced by this tree, if resolved.
    ///
    /// Returns `Some(((a, b), (c, d)))` with the pairs sorted, or `None` when the
    /// four paths meet at a single node.
    pub fn quartet_split(&self, q: [usize; 4]) -> Option<((usize, usize), (usize, usize))> {
        let d: Vec<Vec<usize>> = q.iter().map(|&l| self.distances_from(self.leaf(l))).collect();
        let dist = |i: usize, j: usize| d[i][self.leaf(q[j])];
        let sums = [
            (dist(0, 1) + dist(2, 3), ((0, 1), (2, 3))),
            (dist(0, 2) + dist(1, 3), ((0, 2), (1, 3))),
            (dist(0, 3) + dist(1, 2), ((0, 3), (1, 2))),
        ];
        let min = sums.iter().map(|s| s.0).min().unwrap();
        let winners: Vec<_> = sums.iter().filter(|s| s.0 == min).collect();
        if winners.len() != 1 {
            return None;
        }
        let ((i, j), (k, l)) = winners[0].1;
        Some(sort_pairs((q[i], q[j]), (q[k], q[l])))
    }

    // ----- generators -----

    /// Caterpillar whose leaves appear along the spine in the given label order.
    ///
    /// Leaf `l` is node `l - 1` and the spine occupies nodes `n..2n - 2`.
    pub fn caterpillar(order: &[usize]) -> Result<Self> {
        let n = order.len();
        if n < 2 {
            return Err(Error::InvalidTopology("need at least two leaves".into()));
        }
        let leaf_labels: Vec<(NodeId, usize)> = order.iter().map(|&l| (l.wrapping_sub(1), l)).collect();
        if order.iter().any(|&l| l == 0 || l > n) {
            return Err(Error::InvalidTopology("caterpillar order must be a permutation of 1..=n".into()));
        }
        if n == 2 {
            return Self::from_edges(2, &[(0, 1)], &leaf_labels);
        }
        // leaf at spine position i is node order[i] - 1; spine nodes are n..2n-2
        let at = |i: usize| order[i] - 1;
        if n == 3 {
            return Self::from_edges(4, &[(at(0), 3), (at(1), 3), (at(2), 3)], &leaf_labels);
        }
        let spine = n - 2;
        let mut edges = Vec::new();
        for s in 0..spine - 1 {
            edges.push((n + s, n + s + 1));
        }
        edges.push((at(0), n));
        edges.push((at(1), n));
        for i in 2..n - 2 {
            edges.push((at(i), n + i - 1));
        }
        edges.push((at(n - 2), n + spine - 1));
        edges.push((at(n - 1), n + spine - 1));
        Self::from_edges(2 * n - 2, &edges, &leaf_labels)
    }

    /// Balanced binary tree on `n = 2^h` leaves (rooted complete tree with the root suppressed).
    pub fn balanced(n: usize) -> Result<Self> {
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::InvalidTopology("balanced trees need 2^h leaves".into()));
        }
        if n == 2 {
            return Self::from_edges(2, &[(0, 1)], &[(0, 1), (1, 2)]);
        }
        // heap layout: node 1 is the root, children 2i and 2i+1, leaves n..2n-1.
        let heap_to_id = |h: usize| -> NodeId {
            if h >= n {
                h - n
            } else {
                n + h - 2
            }
        };
        let mut edges = Vec::new();
        for h in 2..2 * n {
            let parent = h / 2;
            if parent == 1 {
                continue;
            }
            edges.push((heap_to_id(parent), heap_to_id(h)));
        }
        edges.push((heap_to_id(2), heap_to_id(3)));
        let leaf_labels: Vec<(NodeId, usize)> = (0..n).map(|i| (i, i + 1)).collect();
        Self::from_edges(2 * n - 2, &edges, &leaf_labels)
    }

    /// Random binary tree by repeated insertion of leaves on uniformly chosen edges.
    ///
    /// Leaf `i + 1` is node `i`.
    pub fn random_binary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidTopology("need at least two leaves".into()));
        }
        let leaf_labels: Vec<(NodeId, usize)> = (0..n).map(|i| (i, i + 1)).collect();
        if n == 2 {
            return Self::from_edges(2, &[(0, 1)], &leaf_labels);
        }
        let mut edges = vec![(0, n), (1, n), (2, n)];
        for (leaf, w) in (3..n).zip(n + 1..) {
            let idx = rng.random_range(0..edges.len());
            let (u, v) = edges.swap_remove(idx);
            edges.push((u, w));
            edges.push((w, v));
            edges.push((leaf, w));
        }
        Self::from_edges(2 * n - 2, &edges, &leaf_labels)
    }

    /// Random caterpillar on `n` leaves with a uniformly shuffled leaf order.
    pub fn random_caterpillar<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self> {
        let mut order: Vec<usize> = (1..=n).collect();
        order.shuffle(rng);
        Self::caterpillar(&order)
    }

    // ----- Newick -----

    /// Newick string of the tree hung from `root`. Leaves are written by label;
    /// internal names are included when `internal_names` is set.
    pub fn to_newick(&self, root: NodeId, internal_names: bool) -> String {
        let mut out = String::new();
        self.write_newick(root, None, internal_names, &mut out);
        out.push(';');
        out
    }

    /// Newick string hung from the lowest-id internal node (or leaf 1 for two leaves).
    pub fn to_newick_default(&self) -> String {
        let root = self.internal_nodes().first().copied().unwrap_or_else(|| self.leaf(1));
        self.to_newick(root, false)
    }

    fn write_newick(&self, v: NodeId, parent: Option<NodeId>, names: bool, out: &mut String) {
        let children: Vec<NodeId> = self.adjacency[v]
            .iter()
            .copied()
            .filter(|&w| Some(w) != parent)
            .collect();
        if !children.is_empty() {
            out.push('(');
            for (i, &c) in children.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                self.write_newick(c, Some(v), names, out);
            }
            out.push(')');
        }
        if self.is_leaf(v) || names {
            out.push_str(&self.names[v]);
        }
    }

    /// Parses a Newick string. Leaf names must be the integer labels `1..=n`;
    /// internal names are optional and branch lengths are ignored. An unnamed
    /// root of degree two is suppressed so rooted binary Newick is accepted.
    pub fn parse_newick(text: &str) -> Result<Self> {
        let mut parser = NewickParser {
            chars: text.chars().collect(),
            pos: 0,
            nodes: Vec::new(),
        };
        parser.skip_ws();
        let root = parser.subtree(None)?;
        parser.skip_ws();
        if parser.peek() == Some(';') {
            parser.pos += 1;
        }
        parser.skip_ws();
        if parser.pos < parser.chars.len() {
            return Err(parser.error("trailing characters after tree"));
        }
        let mut nodes = parser.nodes;

        // suppress an unnamed degree-2 root
        let mut removed = None;
        if nodes[root].name.is_none() && nodes[root].children.len() == 2 {
            let (a, b) = (nodes[root].children[0], nodes[root].children[1]);
            nodes[a].parent = Some(b);
            nodes[b].children.push(a);
            nodes[b].parent = None;
            removed = Some(root);
        }
        let id_map: Vec<Option<NodeId>> = {
            let mut next = 0;
            (0..nodes.len())
                .map(|i| {
                    if Some(i) == removed {
                        None
                    } else {
                        next += 1;
                        Some(next - 1)
                    }
                })
                .collect()
        };
        let node_count = id_map.iter().flatten().count();
        let mut edges = Vec::new();
        for (i, node) in nodes.iter().enumerate() {
            if Some(i) == removed {
                continue;
            }
            if let Some(p) = node.parent {
                if Some(p) != removed {
                    edges.push((id_map[p].unwrap(), id_map[i].unwrap()));
                }
            }
        }
        let mut degree = vec![0usize; node_count];
        for &(u, v) in &edges {
            degree[u] += 1;
            degree[v] += 1;
        }
        let mut leaf_labels = Vec::new();
        let mut names = vec![String::new(); node_count];
        for (i, node) in nodes.iter().enumerate() {
            let Some(id) = id_map[i] else { continue };
            if degree[id] == 1 {
                let name = node.name.clone().ok_or_else(|| Error::Format {
                    line: 1,
                    column: node.column,
                    message: "leaf without a label".into(),
                })?;
                let label: usize = name.parse().map_err(|_| Error::Format {
                    line: 1,
                    column: node.column,
                    message: format!("leaf name {name:?} is not an integer label"),
                })?;
                leaf_labels.push((id, label));
                names[id] = name;
            } else {
                names[id] = node.name.clone().unwrap_or_else(|| format!("v{id}"));
            }
        }
        let topo = Self::from_edges(node_count, &edges, &leaf_labels)?;
        // leaf names like "01" are normalised to the label itself
        let names = names
            .into_iter()
            .enumerate()
            .map(|(v, s)| topo.labels[v].map(|l| l.to_string()).unwrap_or(s))
            .collect();
        topo.with_names(names)
    }
}

fn sort_pairs(p: (usize, usize), q: (usize, usize)) -> ((usize, usize), (usize, usize)) {
    let p = (p.0.min(p.1), p.0.max(p.1));
    let q = (q.0.min(q.1), q.0.max(q.1));
    if p <= q {
        (p, q)
    } else {
        (q, p)
    }
}

struct RawNode {
    name: Option<String>,
    parent: Option<usize>,
    children: Vec<usize>,
    column: usize,
}

struct NewickParser {
    chars: Vec<char>,
    pos: usize,
    nodes: Vec<RawNode>,
}

impl NewickParser {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn error(&self, message: &str) -> Error {
        Error::Format {
            line: 1,
            column: self.pos + 1,
            message: message.to_string(),
        }
    }

    fn subtree(&mut self, parent: Option<usize>) -> Result<usize> {
        let id = self.nodes.len();
        self.nodes.push(RawNode {
            name: None,
            parent,
            children: Vec::new(),
            column: self.pos + 1,
        });
        self.skip_ws();
        if self.peek() == Some('(') {
            self.pos += 1;
            loop {
                let child = self.subtree(Some(id))?;
                self.nodes[id].children.push(child);
                self.skip_ws();
                match self.peek() {
                    Some(',') => self.pos += 1,
                    Some(')') => {
                        self.pos += 1;
                        break;
                    }
                    _ => return Err(self.error("expected ',' or ')'")),
                }
            }
        }
        self.skip_ws();
        let start = self.pos;
        while self
            .peek()
            .is_some_and(|c| !"(),:;".contains(c) && !c.is_whitespace())
        {
            self.pos += 1;
        }
        if self.pos > start {
            self.nodes[id].name = Some(self.chars[start..self.pos].iter().collect());
        }
        self.skip_ws();
        if self.peek() == Some(':') {
            self.pos += 1;
            self.skip_ws();
            let start = self.pos;
            while self
                .peek()
                .is_some_and(|c| c.is_ascii_digit() || "+-.eE".contains(c))
            {
                self.pos += 1;
            }
            let text: String = self.chars[start..self.pos].iter().collect();
            if text.parse::<f64>().is_err() {
                return Err(self.error("malformed branch length"));
            }
        }
        if self.nodes[id].children.is_empty() && self.nodes[id].name.is_none() {
            return Err(self.error("unnamed leaf"));
        }
        Ok(id)
    }
}
