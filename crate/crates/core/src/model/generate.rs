//! Random nonsingular models for experiments and tests.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::rng::{substream, Domain};

use super::markov::{MarkovTreeModel, TransitionMatrix};
use super::tree::TreeTopology;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Binary,
    Caterpillar,
    /// Complete binary tree; `n` must be a power of two.
    Balanced,
}

impl std::str::FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(Shape::Binary),
            "caterpillar" => Ok(Shape::Caterpillar),
            "balanced" => Ok(Shape::Balanced),
            other => Err(Error::InvalidConfig(format!("unknown shape {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub n: usize,
    pub k: usize,
    pub shape: Shape,
    /// Every edge determinant lies in `(det_lo, det_hi]`.
    pub det_lo: f64,
    pub det_hi: f64,
    /// Every node marginal entry must exceed this.
    pub sigma: f64,
    /// Weight of the uniform law mixed into the random root law.
    pub root_mix: f64,
    /// Cap on rejection-sampling rounds, per matrix and for whole models.
    pub max_attempts: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n: 4,
            k: 2,
            shape: Shape::Binary,
            det_lo: 0.5,
            det_hi: 0.9,
            sigma: 0.05,
            root_mix: 0.5,
            max_attempts: 10_000,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidConfig("need at least two leaves".into()));
        }
        if self.k < 2 {
            return Err(Error::InvalidConfig("need at least two states".into()));
        }
        if self.det_hi >= 1.0 {
            return Err(Error::InvalidConfig(format!(
                "determinant range upper end {} is not below 1: stochastic matrices of determinant 1 \
                 are permutations, which make the model singular in the learnability sense",
                self.det_hi
            )));
        }
        if !(self.det_lo >= 0.0 && self.det_lo < self.det_hi) {
            return Err(Error::InvalidConfig(format!(
                "determinant range ({}, {}] is empty",
                self.det_lo, self.det_hi
            )));
        }
        if !(self.sigma >= 0.0 && self.sigma < 1.0 / self.k as f64) {
            return Err(Error::InvalidConfig(format!("sigma must lie in [0, 1/{})", self.k)));
        }
        if !(0.0..=1.0).contains(&self.root_mix) {
            return Err(Error::InvalidConfig("root_mix must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// A uniform draw from the probability simplex.
pub fn dirichlet_flat<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    let x: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
    let s: f64 = x.iter().sum();
    x.into_iter().map(|v| v / s).collect()
}

/// `lambda I + (1 - lambda) D` with Dirichlet rows `D`, redrawn until `|det|` lies in `(lo, hi]`.
pub fn random_transition<R: Rng + ?Sized>(
    k: usize,
    lo: f64,
    hi: f64,
    max_attempts: usize,
    rng: &mut R,
) -> Result<TransitionMatrix> {
    for _ in 0..max_attempts {
        let lambda: f64 = rng.random();
        let mut m = Matrix::zeros(k, k);
        for i in 0..k {
            let row = dirichlet_flat(k, rng);
            for j in 0..k {
                m[(i, j)] = (1.0 - lambda) * row[j];
            }
            m[(i, i)] += lambda;
        }
        let d = linalg::det(&m).abs();
        if d > lo && d <= hi {
            return Ok(TransitionMatrix::renormalized(m));
        }
    }
    Err(Error::GenerationTimeout {
        attempts: max_attempts,
        reason: format!("no {k}x{k} matrix with |det| in ({lo}, {hi}]"),
    })
}

pub fn random_topology<R: Rng + ?Sized>(n: usize, shape: Shape, rng: &mut R) -> Result<TreeTopology> {
    match shape {
        Shape::Binary => TreeTopology::random_binary(n, rng),
        Shape::Caterpillar => TreeTopology::random_caterpillar(n, rng),
        Shape::Balanced => TreeTopology::balanced(n),
    }
}

/// Random matrices on a fixed topology, rooted at its lowest internal node
/// (leaf 1 when there is none). Whole models are redrawn until every node
/// marginal exceeds `cfg.sigma`.
pub fn random_model_on<R: Rng + ?Sized>(
    topology: &TreeTopology,
    cfg: &GeneratorConfig,
    rng: &mut R,
) -> Result<MarkovTreeModel> {
    cfg.validate()?;
    let k = cfg.k;
    let root = topology.internal_nodes().first().copied().unwrap_or_else(|| topology.leaf(1));
    let parent = topology.parents_from(root);
    let mut worst = 0.0f64;
    for _ in 0..cfg.max_attempts {
        let flat = dirichlet_flat(k, rng);
        let root_dist: Vec<f64> = flat.iter().map(|p| (1.0 - cfg.root_mix) * p + cfg.root_mix / k as f64).collect();
        let s: f64 = root_dist.iter().sum();
        let root_dist: Vec<f64> = root_dist.iter().map(|p| p / s).collect();
        let mut edges = BTreeMap::new();
        for v in topology.bfs_order(root) {
            if let Some(u) = parent[v] {
                edges.insert((u, v), random_transition(k, cfg.det_lo, cfg.det_hi, cfg.max_attempts, rng)?);
            }
        }
        let model = MarkovTreeModel::new(topology.clone(), root, root_dist, edges)?;
        let min = model
            .marginals()
            .iter()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if min > cfg.sigma {
            return Ok(model);
        }
        worst = worst.max(min);
    }
    Err(Error::GenerationTimeout {
        attempts: cfg.max_attempts,
        reason: format!(
            "no model with all marginals above {} (best minimum {worst:e})",
            cfg.sigma
        ),
    })
}

/// Topology and matrices drawn from the generator substream of `seed`.
pub fn random_model(cfg: &GeneratorConfig, seed: u64) -> Result<MarkovTreeModel> {
    cfg.validate()?;
    let mut rng = substream(seed, Domain::Generator, 0, 0);
    let topology = random_topology(cfg.n, cfg.shape, &mut rng)?;
    random_model_on(&topology, cfg, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    #[test]
    fn generated_models_validate() {
        for seed in 0..20 {
            let cfg = GeneratorConfig {
                n: 4,
                k: 2,
                ..GeneratorConfig::default()
            };
            let m = random_model(&cfg, seed).unwrap();
            let report = m.validate(&ModelConfig {
                beta: 0.5,
                beta_prime: 0.1,
                sigma: 0.05,
            });
            assert!(report.pass, "{:?}", report.failures());
        }
    }

    #[test]
    fn determinism() {
        let cfg = GeneratorConfig {
            n: 7,
            k: 3,
            shape: Shape::Caterpillar,
            det_lo: 0.3,
            det_hi: 0.9,
            sigma: 0.02,
            ..GeneratorConfig::default()
        };
        assert_eq!(random_model(&cfg, 9).unwrap(), random_model(&cfg, 9).unwrap());
        assert!(random_model(&cfg, 9).unwrap().topology().is_caterpillar());
    }

    #[test]
    fn unit_determinant_range_is_rejected() {
        let cfg = GeneratorConfig {
            det_lo: 1.0,
            det_hi: 1.0,
            ..GeneratorConfig::default()
        };
        match random_model(&cfg, 0) {
            Err(Error::InvalidConfig(msg)) => assert!(msg.contains("permutation")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn impossible_marginal_floor_times_out() {
        let cfg = GeneratorConfig {
            n: 6,
            k: 2,
            det_lo: 0.2,
            det_hi: 0.3,
            sigma: 0.4999,
            root_mix: 0.0,
            max_attempts: 20,
            ..GeneratorConfig::default()
        };
        assert!(matches!(random_model(&cfg, 1), Err(Error::GenerationTimeout { .. })));
    }
}
