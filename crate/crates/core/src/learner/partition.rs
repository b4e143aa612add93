//! Depth of a tree and nearest-leaf queries.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::model::{NodeId, TreeTopology};

/// Hop distance from `x` to the nearest leaf without crossing the edge `(x, y)`; zero for a leaf.
pub fn leaf_distance_avoiding(t: &TreeTopology, x: NodeId, y: NodeId) -> usize {
    if t.is_leaf(x) {
        return 0;
    }
    let mut queue = VecDeque::from([(x, y, 0usize)]);
    while let Some((v, prev, d)) = queue.pop_front() {
        if t.is_leaf(v) && v != x {
            return d;
        }
        for &w in t.neighbors(v) {
            if w != prev {
                queue.push_back((w, v, d + 1));
            }
        }
    }
    usize::MAX
}

/// `max` over edges `(u, v)` of the larger nearest-leaf distance of the endpoints.
pub fn depth(t: &TreeTopology) -> usize {
    t.edges()
        .into_iter()
        .map(|(u, v)| leaf_distance_avoiding(t, u, v).max(leaf_distance_avoiding(t, v, u)))
        .max()
        .unwrap_or(0)
}

/// Nearest leaf label reachable from `from` without the edge `excluded`; ties go to the lowest label.
///
/// `from` itself counts when it is a leaf.
pub fn closest_leaf(t: &TreeTopology, from: NodeId, excluded: (NodeId, NodeId)) -> Result<(usize, usize)> {
    let blocked = |u: NodeId, v: NodeId| (u, v) == excluded || (v, u) == excluded;
    let mut dist = vec![usize::MAX; t.node_count()];
    dist[from] = 0;
    let mut queue = VecDeque::from([from]);
    let mut best: Option<(usize, usize)> = None;
    while let Some(v) = queue.pop_front() {
        if let Some((d, _)) = best {
            if dist[v] > d {
                break;
            }
        }
        if let Some(l) = t.label(v) {
            match best {
                Some((d, b)) if d == dist[v] && l < b => best = Some((d, l)),
                None => best = Some((dist[v], l)),
                _ => {}
            }
        }
        for &w in t.neighbors(v) {
            if dist[w] == usize::MAX && !blocked(v, w) {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
        }
    }
    best.map(|(d, l)| (l, d)).ok_or(Error::Unreachable { from })
}
