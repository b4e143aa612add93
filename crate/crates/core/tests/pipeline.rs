use treespec::eval::{align_labels, tv_leaf_distance};
use treespec::learner::{fullrecon, LearnerConfig};
use treespec::model::generate::{random_model, GeneratorConfig, Shape};
use treespec::spectral::{ExactMoments, SampleMoments};
use treespec::topology::{additive_logdet, reconstruct_binary, LogDetMetric, TopologyParams};

fn model(n: usize, k: usize, shape: Shape, seed: u64) -> treespec::model::MarkovTreeModel {
    random_model(
        &GeneratorConfig {
            n,
            k,
            shape,
            det_lo: 0.5,
            det_hi: 0.9,
            sigma: 0.1,
            ..GeneratorConfig::default()
        },
        seed,
    )
    .unwrap()
}

#[test]
fn exact_topology_then_exact_learning() {
    for seed in 0..5 {
        let truth = model(9, 3, Shape::Binary, seed);
        let exact = ExactMoments::new(truth.clone());
        let metric = LogDetMetric::from_moments(&exact).unwrap();
        let params = TopologyParams {
            delta_cap: 50.0,
            ..TopologyParams::default()
        };
        let topo = reconstruct_binary(&metric, &params).unwrap().topology;
        assert!(topo.same_topology(truth.topology()));
        let out = fullrecon(&topo, &exact, &LearnerConfig::default()).unwrap();
        assert!(tv_leaf_distance(&out.model_hat, &truth).unwrap().tv < 1e-9);
        assert!(align_labels(&out.model_hat, &truth).unwrap().max_l1 < 1e-7);
    }
}

#[test]
fn sampled_learning_is_close() {
    let truth = model(6, 2, Shape::Caterpillar, 3);
    let samples = truth.sample(400_000, 8);
    let out = fullrecon(
        truth.topology(),
        &SampleMoments::new(&samples, false),
        &LearnerConfig::sampled(2, samples.m(), 1),
    )
    .unwrap();
    assert!(align_labels(&out.model_hat, &truth).unwrap().max_l1 < 0.1);
    assert!(tv_leaf_distance(&out.model_hat, &truth).unwrap().tv < 0.02);
}

#[test]
fn leaf_distances_add_along_paths() {
    let truth = model(8, 3, Shape::Balanced, 2);
    let t = truth.topology();
    for a in 1..=8 {
        for b in a + 1..=8 {
            let direct = additive_logdet(&truth.exact_joint(&[t.leaf(a), t.leaf(b)]).unwrap().as_matrix());
            let path = t.path(t.leaf(a), t.leaf(b));
            let sum: f64 = path
                .windows(2)
                .map(|w| treespec::topology::edge_logdet_weight(&truth, w[0], w[1]).unwrap())
                .sum();
            assert!((direct - sum).abs() < 1e-10, "({a},{b}): {direct} vs {sum}");
        }
    }
}
