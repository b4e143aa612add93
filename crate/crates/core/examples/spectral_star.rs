//! Recover the first edge of a three-leaf star from its pair and triple moments.

use std::collections::BTreeMap;

use treespec::linalg;
use treespec::model::{MarkovTreeModel, TransitionMatrix, TreeTopology};
use treespec::spectral::{chang_decompose, DecomposeInput, ExactMoments, MomentSource, SpectralConfig};

fn tm(rows: &[[f64; 3]]) -> TransitionMatrix {
    TransitionMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
}

fn main() -> treespec::Result<()> {
    // leaves 1, 2, 3 around the hidden node 3; the root is leaf 1
    let t = TreeTopology::from_edges(4, &[(0, 3), (1, 3), (2, 3)], &[(0, 1), (1, 2), (2, 3)])?;
    let p_ar = tm(&[[0.8, 0.1, 0.1], [0.1, 0.7, 0.2], [0.15, 0.15, 0.7]]);
    let edges = BTreeMap::from([
        ((0, 3), p_ar.clone()),
        ((3, 1), tm(&[[0.75, 0.15, 0.1], [0.1, 0.8, 0.1], [0.2, 0.1, 0.7]])),
        ((3, 2), tm(&[[0.7, 0.2, 0.1], [0.2, 0.6, 0.2], [0.1, 0.1, 0.8]])),
    ]);
    let model = MarkovTreeModel::new(t, 0, vec![0.3, 0.3, 0.4], edges)?;
    let moments = ExactMoments::new(model);

    let pair = moments.pair(1, 2)?;
    let slices = moments.triple(1, 2, 3)?;
    let input = DecomposeInput {
        leaves: (1, 2),
        pair: &pair,
        slices: &slices,
        probe_seed: 7,
        index: 0,
        min_count: None,
    };
    let (x, diag) = chang_decompose(input, &SpectralConfig::default())?;
    println!("recovered P^(a,r) up to column order:\n{x:.6}");
    println!("pair det {:.4}, residual {:.2e}, retries {}", diag.pair_det, diag.residual, diag.retries());

    let best = linalg::permutations(3)
        .iter()
        .map(|p| linalg::max_abs(&(linalg::permute_columns(&x, p) - p_ar.entries())))
        .fold(f64::INFINITY, f64::min);
    println!("max entry error after relabelling: {best:.2e}");
    Ok(())
}
