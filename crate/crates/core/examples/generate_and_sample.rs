//! Draw a random nonsingular model, check it, and sample its leaves.

use treespec::model::generate::{random_model, GeneratorConfig, Shape};
use treespec::model::ModelConfig;
use treespec::spectral::count_single;

fn main() -> treespec::Result<()> {
    let cfg = GeneratorConfig {
        n: 6,
        k: 3,
        shape: Shape::Binary,
        det_lo: 0.4,
        det_hi: 0.9,
        ..GeneratorConfig::default()
    };
    let model = random_model(&cfg, 11)?;
    println!("topology {}", model.topology().to_newick_default());

    let report = model.validate(&ModelConfig {
        beta: cfg.det_lo,
        beta_prime: 1.0 - cfg.det_hi,
        sigma: cfg.sigma,
    });
    println!("valid: {}", report.pass);
    for (u, v) in model.directed_edges() {
        println!("  det P({u}->{v}) = {:.4}", model.edge_matrix(u, v).unwrap().det_abs());
    }

    let samples = model.sample(50_000, 1);
    let marginals = model.marginals();
    for label in 1..=model.topology().leaf_count() {
        let counts = count_single(&samples, label);
        let freq: Vec<String> =
            counts.iter().map(|&c| format!("{:.3}", c as f64 / samples.m() as f64)).collect();
        let exact: Vec<String> =
            marginals[model.topology().leaf(label)].iter().map(|p| format!("{p:.3}")).collect();
        println!("leaf {label}: empirical [{}] exact [{}]", freq.join(" "), exact.join(" "));
    }
    Ok(())
}
