//! Run the full reconstruction on an exact moment oracle and compare with the truth.

use treespec::eval::{align_labels, tv_leaf_distance};
use treespec::learner::{fullrecon, LearnerConfig};
use treespec::model::generate::{random_model, GeneratorConfig, Shape};
use treespec::spectral::ExactMoments;

fn main() -> treespec::Result<()> {
    let truth = random_model(
        &GeneratorConfig {
            n: 10,
            k: 3,
            shape: Shape::Binary,
            det_lo: 0.3,
            det_hi: 0.9,
            ..GeneratorConfig::default()
        },
        3,
    )?;
    let out = fullrecon(truth.topology(), &ExactMoments::new(truth.clone()), &LearnerConfig::default())?;
    println!(
        "depth {}, {} subtrees, {} separators, {} probe retries",
        out.depth,
        out.subtrees.len(),
        out.separators.len(),
        out.total_retries()
    );
    for sub in &out.subtrees {
        println!("  reference leaf {} owns {} nodes", sub.reference, sub.nodes.len());
    }
    let align = align_labels(&out.model_hat, &truth)?;
    let tv = tv_leaf_distance(&out.model_hat, &truth)?;
    println!("max edge L1 {:.2e}, leaf TV {:.2e}", align.max_l1, tv.tv);
    Ok(())
}
