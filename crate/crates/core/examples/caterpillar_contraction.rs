//! A caterpillar with one nearly invisible spine edge: the edge is contracted
//! rather than guessed.

use std::collections::BTreeMap;

use treespec::model::generate::{random_transition, GeneratorConfig};
use treespec::model::{MarkovTreeModel, TransitionMatrix, TreeTopology};
use treespec::rng::{substream, Domain};
use treespec::topology::{reconstruct_caterpillar, LogDetMetric, TopologyParams};

fn main() -> treespec::Result<()> {
    let t = TreeTopology::caterpillar(&[1, 2, 3, 4, 5, 6, 7, 8])?;
    let root = t.internal_nodes()[0];
    let parent = t.parents_from(root);
    let cfg = GeneratorConfig {
        k: 2,
        det_lo: 0.55,
        det_hi: 0.85,
        ..GeneratorConfig::default()
    };
    let mut rng = substream(4, Domain::Generator, 0, 0);
    // the middle spine edge is within 1e-4 of the identity
    let spine = t.path(t.leaf(1), t.leaf(8));
    let weak = (spine[spine.len() / 2 - 1], spine[spine.len() / 2]);
    let near_id = TransitionMatrix::from_rows(&[vec![0.99995, 0.00005], vec![0.00005, 0.99995]])?;
    let mut edges = BTreeMap::new();
    for v in 0..t.node_count() {
        if let Some(u) = parent[v] {
            let p = if (u, v) == weak || (v, u) == weak {
                near_id.clone()
            } else {
                random_transition(cfg.k, cfg.det_lo, cfg.det_hi, cfg.max_attempts, &mut rng)?
            };
            edges.insert((u, v), p);
        }
    }
    let model = MarkovTreeModel::new(t.clone(), root, vec![0.5, 0.5], edges)?;

    let samples = model.sample(1_000_000, 9);
    let metric = LogDetMetric::from_samples(&samples)?;
    let out = reconstruct_caterpillar(&metric, &TopologyParams::default())?;
    println!("truth     {}", t.to_newick_default());
    println!("recovered {}", out.topology.to_newick_default());
    println!("contracted blocks {:?}", out.contracted);
    Ok(())
}
