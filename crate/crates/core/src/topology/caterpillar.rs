//! Caterpillar reconstruction that contracts edges too short to resolve.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::model::{NodeId, TreeTopology};

use super::logdet::LogDetMetric;
use super::quartet::{decide_short_quartets, QuartetSplit};
use super::{QuartetMode, TopologyParams};

/// Leaf graph joining short pairs that no decided quartet separates.
#[derive(Clone, Debug, PartialEq)]
pub struct ContractionGraph {
    pub edges: Vec<(usize, usize)>,
    /// Components sorted by their lowest label, each sorted.
    pub components: Vec<Vec<usize>>,
}

impl ContractionGraph {
    pub fn build(n: usize, short: &[(usize, usize)], decided: &[QuartetSplit]) -> Self {
        let edges: Vec<(usize, usize)> = short
            .iter()
            .copied()
            .filter(|&(a, b)| !decided.iter().any(|q| q.separates(a, b)))
            .collect();
        let mut parent: Vec<usize> = (0..=n).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            let mut y = x;
            while p[y] != r {
                let next = p[y];
                p[y] = r;
                y = next;
            }
            r
        }
        for &(a, b) in &edges {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for x in 1..=n {
            groups.entry(find(&mut parent, x)).or_default().push(x);
        }
        ContractionGraph {
            edges,
            components: groups.into_values().collect(),
        }
    }

    pub fn component_of(&self, x: usize) -> usize {
        self.components.iter().position(|c| c.contains(&x)).unwrap()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CaterpillarResult {
    pub topology: TreeTopology,
    pub graph: ContractionGraph,
    /// Representatives in spine order.
    pub order: Vec<usize>,
    pub decided: usize,
    pub undecided: usize,
    /// Components whose leaves were merged into their attachment node.
    pub contracted: Vec<Vec<usize>>,
}

pub fn reconstruct_caterpillar(metric: &LogDetMetric, params: &TopologyParams) -> Result<CaterpillarResult> {
    params.validate()?;
    let n = metric.n();
    if n < 4 {
        return Err(Error::InvalidConfig("caterpillar reconstruction needs at least four leaves".into()));
    }
    let short = metric.short_pairs(params.delta_cap);
    let quartets = decide_short_quartets(metric, params.delta_cap, params.contraction_delta);
    if quartets.decided.is_empty() {
        return Err(Error::InsufficientSignal(format!(
            "none of the {} short quartets was decided",
            quartets.undecided
        )));
    }
    let graph = ContractionGraph::build(n, &short, &quartets.decided);
    let reps: Vec<usize> = graph.components.iter().map(|c| c[0]).collect();
    let rep_of: Vec<usize> = (0..=n).map(|x| if x == 0 { 0 } else { reps[graph.component_of(x)] }).collect();

    // quartets over representatives, projected through the components
    let mut rep_quartets: BTreeSet<QuartetSplit> = BTreeSet::new();
    for q in &quartets.decided {
        let [a, b, c, d] = q.leaves().map(|x| rep_of[x]);
        if BTreeSet::from([a, b, c, d]).len() == 4 {
            rep_quartets.insert(QuartetSplit::new(a, b, c, d));
        }
    }
    let rep_quartets: Vec<QuartetSplit> = rep_quartets.into_iter().collect();
    let order = peel_cherries(&reps, &rep_quartets)?;

    let mut builder = Builder::default();
    for x in 1..=n {
        builder.leaf(x);
    }
    let mut contracted = Vec::new();
    let comp_of_rep: BTreeMap<usize, &Vec<usize>> = graph.components.iter().map(|c| (c[0], c)).collect();
    match order.len() {
        1 => {
            let centre = builder.internal();
            for x in 1..=n {
                builder.edge(centre, x);
            }
            contracted.push(graph.components[0].clone());
        }
        2 => {
            let ends: Vec<NodeId> = order
                .iter()
                .map(|r| {
                    let comp = comp_of_rep[r];
                    if comp.len() == 1 {
                        builder.leaf_node(comp[0])
                    } else {
                        let c = builder.internal();
                        for &x in comp {
                            builder.edge(c, x);
                        }
                        c
                    }
                })
                .collect();
            builder.raw_edge(ends[0], ends[1]);
        }
        _ => {
            // spine of the representative caterpillar
            let a = order.len();
            let spine: Vec<NodeId> = (0..a - 2).map(|_| builder.internal()).collect();
            let attach: Vec<usize> = (0..a)
                .map(|i| match i {
                    0 | 1 => 0,
                    _ if i >= a - 2 => a - 3,
                    _ => i - 1,
                })
                .collect();
            for w in spine.windows(2) {
                builder.raw_edge(w[0], w[1]);
            }
            // leaves of every representative whose position satisfies `pred`
            let group = |pred: &dyn Fn(usize) -> bool| -> Vec<usize> {
                (0..a)
                    .filter(|&p| pred(p))
                    .flat_map(|p| comp_of_rep[&order[p]].iter().copied())
                    .collect()
            };
            // every spine node's candidate stars, scored by supporting quartets
            let mut keep = vec![false; a];
            for s in 0..a - 2 {
                let members: Vec<usize> = (0..a).filter(|&i| attach[i] == s).collect();
                let internal_neighbours = usize::from(s > 0) + usize::from(s + 3 < a);
                let capacity = 2usize.saturating_sub(internal_neighbours);
                let mut scored: Vec<(usize, usize)> = Vec::new();
                for &i in &members {
                    let comp = comp_of_rep[&order[i]];
                    if comp.len() < 2 {
                        continue;
                    }
                    // the two other neighbour groups of spine node s
                    let groups: Vec<Vec<usize>> = {
                        let mut g = Vec::new();
                        for &j in &members {
                            if j != i {
                                g.push(group(&|p| p == j));
                            }
                        }
                        if s > 0 {
                            g.push(group(&|p| attach[p] < s));
                        }
                        if s + 3 < a {
                            g.push(group(&|p| attach[p] > s));
                        }
                        g
                    };
                    let support = quartets
                        .decided
                        .iter()
                        .filter(|q| supports(q, comp, &groups))
                        .count();
                    if support > 0 {
                        scored.push((support, i));
                    }
                }
                scored.sort_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(&y.1)));
                for &(_, i) in scored.iter().take(capacity) {
                    keep[i] = true;
                }
            }
            for i in 0..a {
                let comp = comp_of_rep[&order[i]];
                let s = spine[attach[i]];
                if comp.len() == 1 {
                    builder.edge(s, comp[0]);
                } else if keep[i] {
                    let c = builder.internal();
                    builder.raw_edge(s, c);
                    for &x in comp {
                        builder.edge(c, x);
                    }
                } else {
                    for &x in comp {
                        builder.edge(s, x);
                    }
                    contracted.push(comp.clone());
                }
            }
        }
    }
    let topology = builder.finish()?;
    if params.quartet_mode == QuartetMode::Strict && !topology.is_binary() {
        return Err(Error::InsufficientSignal(format!(
            "strict mode: components {contracted:?} would be contracted"
        )));
    }
    Ok(CaterpillarResult {
        topology,
        graph,
        order,
        decided: quartets.decided.len(),
        undecided: quartets.undecided,
        contracted,
    })
}

/// A decided quartet pairing two leaves of `comp` against leaves of two distinct groups.
fn supports(q: &QuartetSplit, comp: &[usize], groups: &[Vec<usize>]) -> bool {
    let check = |inner: (usize, usize), outer: (usize, usize)| {
        comp.contains(&inner.0) && comp.contains(&inner.1) && {
            let g0 = groups.iter().position(|g| g.contains(&outer.0));
            let g1 = groups.iter().position(|g| g.contains(&outer.1));
            matches!((g0, g1), (Some(x), Some(y)) if x != y)
        }
    };
    check(q.left, q.right) || check(q.right, q.left)
}

/// Orders representatives along the spine by repeatedly removing a terminal cherry.
fn peel_cherries(reps: &[usize], quartets: &[QuartetSplit]) -> Result<Vec<usize>> {
    if reps.len() <= 3 {
        return Ok(reps.to_vec());
    }
    let mut alive: BTreeSet<usize> = reps.iter().copied().collect();
    let mut order = Vec::new();
    let mut kept: Option<usize> = None;
    while alive.len() > 3 {
        let active: Vec<&QuartetSplit> = quartets
            .iter()
            .filter(|q| q.leaves().iter().all(|x| alive.contains(x)))
            .collect();
        let is_cherry = |x: usize, y: usize| {
            active.iter().any(|q| q.pairs(x, y)) && !active.iter().any(|q| q.separates(x, y))
        };
        let candidate = match kept {
            None => alive
                .iter()
                .flat_map(|&x| alive.iter().filter(move |&&y| y > x).map(move |&y| (x, y)))
                .find(|&(x, y)| is_cherry(x, y)),
            Some(k) => alive
                .iter()
                .copied()
                .filter(|&y| y != k)
                .find(|&y| is_cherry(k, y))
                .map(|y| (k, y)),
        };
        let Some((x, y)) = candidate else {
            return Err(Error::InsufficientSignal(format!(
                "no terminal cherry among representatives {alive:?}"
            )));
        };
        order.push(x);
        alive.remove(&x);
        kept = Some(y);
    }
    let last = kept.unwrap();
    order.push(last);
    order.extend(alive.iter().copied().filter(|&x| x != last));
    Ok(order)
}

/// Edge-list accumulator; leaf `x` is node `x - 1`.
#[derive(Default)]
struct Builder {
    nodes: usize,
    edges: Vec<(NodeId, NodeId)>,
    leaves: Vec<(NodeId, usize)>,
}

impl Builder {
    fn leaf(&mut self, label: usize) {
        self.leaves.push((self.nodes, label));
        self.nodes += 1;
    }

    fn leaf_node(&self, label: usize) -> NodeId {
        label - 1
    }

    fn internal(&mut self) -> NodeId {
        self.nodes += 1;
        self.nodes - 1
    }

    fn edge(&mut self, node: NodeId, label: usize) {
        self.edges.push((node, label - 1));
    }

    fn raw_edge(&mut self, u: NodeId, v: NodeId) {
        self.edges.push((u, v));
    }

    fn finish(self) -> Result<TreeTopology> {
        TreeTopology::from_edges(self.nodes, &self.edges, &self.leaves)
    }
}
