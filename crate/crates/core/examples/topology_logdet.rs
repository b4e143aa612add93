//! Rebuild a binary topology from empirical log-det distances.

use treespec::model::generate::{random_model, GeneratorConfig};
use treespec::topology::{reconstruct_binary, LogDetMetric, TopologyParams};

fn main() -> treespec::Result<()> {
    let truth = random_model(
        &GeneratorConfig {
            n: 9,
            k: 2,
            det_lo: 0.6,
            det_hi: 0.9,
            sigma: 0.2,
            ..GeneratorConfig::default()
        },
        8,
    )?;
    let samples = truth.sample(200_000, 3);
    let metric = LogDetMetric::from_samples(&samples)?;
    println!("psi(1, 2) = {:.4}", metric.get(1, 2));

    let params = TopologyParams {
        delta_cap: 4.0,
        ..TopologyParams::default()
    };
    let out = reconstruct_binary(&metric, &params)?;
    println!("truth     {}", truth.topology().to_newick_default());
    println!("recovered {}", out.topology.to_newick_default());
    println!(
        "quartets decided {} undecided {}, same topology: {}",
        out.decided,
        out.undecided,
        out.topology.same_topology(truth.topology())
    );
    Ok(())
}
