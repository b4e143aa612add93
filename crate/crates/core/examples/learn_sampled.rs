//! Learn from finite samples and watch the error shrink as the sample size grows.

use treespec::eval::{align_labels, tv_leaf_distance};
use treespec::learner::{fullrecon, LearnerConfig};
use treespec::model::generate::{random_model, GeneratorConfig};
use treespec::spectral::SampleMoments;

fn main() -> treespec::Result<()> {
    let cfg = GeneratorConfig {
        n: 8,
        k: 2,
        det_lo: 0.5,
        det_hi: 0.9,
        sigma: 0.2,
        ..GeneratorConfig::default()
    };
    let truth = random_model(&cfg, 5)?;
    for m in [10_000, 100_000, 1_000_000] {
        let samples = truth.sample(m, 42);
        let moments = SampleMoments::new(&samples, false);
        match fullrecon(truth.topology(), &moments, &LearnerConfig::sampled(cfg.k, m, 0)) {
            Ok(out) => {
                let align = align_labels(&out.model_hat, &truth)?;
                let tv = tv_leaf_distance(&out.model_hat, &truth)?;
                println!("m = {m:>8}: max edge L1 {:.4}, leaf TV {:.4}", align.max_l1, tv.tv);
            }
            Err(e) => println!("m = {m:>8}: failed: {e}"),
        }
    }
    Ok(())
}
