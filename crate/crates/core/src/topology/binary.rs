//! Binary topology by incremental leaf insertion against decided quartets.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::model::{NodeId, TreeTopology};

use super::logdet::LogDetMetric;
use super::quartet::{decide_short_quartets, QuartetSplit};
use super::TopologyParams;

#[derive(Clone, Debug, PartialEq)]
pub struct BinaryResult {
    pub topology: TreeTopology,
    pub decided: usize,
    pub undecided: usize,
    /// Leaves in insertion order.
    pub insertion_order: Vec<usize>,
}

/// Growing tree; leaf `x` is node `x - 1`, internal nodes follow the `n` leaf slots.
struct Growing {
    n: usize,
    adjacency: Vec<Vec<NodeId>>,
    present: BTreeSet<usize>,
}

impl Growing {
    fn from_quartet(n: usize, q: &QuartetSplit) -> Self {
        let mut g = Growing {
            n,
            adjacency: vec![Vec::new(); n],
            present: BTreeSet::new(),
        };
        let u = g.add_node();
        let v = g.add_node();
        g.link(u, v);
        for (x, hub) in [(q.left.0, u), (q.left.1, u), (q.right.0, v), (q.right.1, v)] {
            g.link(x - 1, hub);
            g.present.insert(x);
        }
        g
    }

    fn add_node(&mut self) -> NodeId {
        self.adjacency.push(Vec::new());
        self.adjacency.len() - 1
    }

    fn link(&mut self, u: NodeId, v: NodeId) {
        self.adjacency[u].push(v);
        self.adjacency[v].push(u);
    }

    fn unlink(&mut self, u: NodeId, v: NodeId) {
        self.adjacency[u].retain(|&w| w != v);
        self.adjacency[v].retain(|&w| w != u);
    }

    fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::new();
        for u in 0..self.adjacency.len() {
            for &v in &self.adjacency[u] {
                if u < v {
                    out.push((u, v));
                }
            }
        }
        out
    }

    fn distances(&self, from: NodeId) -> Vec<usize> {
        let mut d = vec![usize::MAX; self.adjacency.len()];
        d[from] = 0;
        let mut queue = std::collections::VecDeque::from([from]);
        while let Some(u) = queue.pop_front() {
            for &w in &self.adjacency[u] {
                if d[w] == usize::MAX {
                    d[w] = d[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        d
    }

    /// Inserts leaf `x` on a new node subdividing `(u, v)`.
    fn insert(&mut self, x: usize, (u, v): (NodeId, NodeId)) {
        let w = self.add_node();
        self.unlink(u, v);
        self.link(u, w);
        self.link(w, v);
        self.link(w, x - 1);
        self.present.insert(x);
    }

    fn finish(self) -> Result<TreeTopology> {
        let edges = self.edges();
        let leaves: Vec<(NodeId, usize)> = (1..=self.n).map(|x| (x - 1, x)).collect();
        TreeTopology::from_edges(self.adjacency.len(), &edges, &leaves)
    }
}

/// Whether a new leaf `x` at doubled distances `dx` from the present leaves gives `q`
/// its recorded split; `dd(y, z)` is the doubled leaf-to-leaf distance.
fn consistent(q: &QuartetSplit, x: usize, dx: &dyn Fn(usize) -> usize, dd: &dyn Fn(usize, usize) -> usize) -> bool {
    let partner = if q.left.0 == x {
        q.left.1
    } else if q.left.1 == x {
        q.left.0
    } else if q.right.0 == x {
        q.right.1
    } else {
        q.right.0
    };
    let rest: Vec<usize> = q.leaves().into_iter().filter(|&y| y != x && y != partner).collect();
    let (p, r0, r1) = (partner, rest[0], rest[1]);
    let paired = dx(p) + dd(r0, r1);
    paired < dx(r0) + dd(p, r1) && paired < dx(r1) + dd(p, r0)
}

pub fn reconstruct_binary(metric: &LogDetMetric, params: &TopologyParams) -> Result<BinaryResult> {
    params.validate()?;
    let n = metric.n();
    if n < 2 {
        return Err(Error::InvalidConfig("need at least two leaves".into()));
    }
    if n <= 3 {
        let topology = if n == 2 {
            TreeTopology::from_edges(2, &[(0, 1)], &[(0, 1), (1, 2)])?
        } else {
            TreeTopology::from_edges(4, &[(0, 3), (1, 3), (2, 3)], &[(0, 1), (1, 2), (2, 3)])?
        };
        return Ok(BinaryResult {
            topology,
            decided: 0,
            undecided: 0,
            insertion_order: (1..=n).collect(),
        });
    }
    let quartets = decide_short_quartets(metric, params.delta_cap, params.contraction_delta);
    let Some(first) = quartets.decided.first() else {
        return Err(Error::InsufficientSignal(format!(
            "none of the {} short quartets was decided",
            quartets.undecided
        )));
    };
    let mut tree = Growing::from_quartet(n, first);
    let mut insertion_order: Vec<usize> = first.leaves().to_vec();
    insertion_order.sort_unstable();
    let mut pending: Vec<usize> = (1..=n).filter(|x| !tree.present.contains(x)).collect();
    while !pending.is_empty() {
        let leaf_dist: Vec<Vec<usize>> = (1..=n)
            .map(|y| if tree.present.contains(&y) { tree.distances(y - 1) } else { Vec::new() })
            .collect();
        let dd = |y: usize, z: usize| 2 * leaf_dist[y - 1][z - 1];
        let edges = tree.edges();
        let table: Vec<(Vec<usize>, Vec<usize>)> = edges.iter().map(|&(u, v)| (tree.distances(u), tree.distances(v))).collect();
        let mut placed = None;
        for (pos, &x) in pending.iter().enumerate() {
            let relevant: Vec<&QuartetSplit> = quartets
                .decided
                .iter()
                .filter(|q| q.contains(x) && q.leaves().iter().all(|&y| y == x || tree.present.contains(&y)))
                .collect();
            if relevant.is_empty() {
                continue;
            }
            let fits: Vec<usize> = (0..edges.len())
                .filter(|&e| {
                    let (du, dv) = &table[e];
                    let dx = |y: usize| 2 * du[y - 1].min(dv[y - 1]) + 3;
                    relevant.iter().all(|q| consistent(q, x, &dx, &dd))
                })
                .collect();
            match fits.as_slice() {
                [] => return Err(Error::QuartetConflict { leaf: x }),
                [e] => {
                    placed = Some((pos, x, edges[*e]));
                    break;
                }
                _ => {}
            }
        }
        let Some((pos, x, edge)) = placed else {
            return Err(Error::InsufficientSignal(format!(
                "decided quartets do not place leaves {pending:?}"
            )));
        };
        tree.insert(x, edge);
        insertion_order.push(x);
        pending.remove(pos);
    }
    Ok(BinaryResult {
        topology: tree.finish()?,
        decided: quartets.decided.len(),
        undecided: quartets.undecided,
        insertion_order,
    })
}
