//! Noisy parity as a four-state hidden Markov model on a caterpillar.
//!
//! Leaves `1..=n` carry the bits `x_i`; leaf `n + 1` carries the noisy label.
//! The root is leaf 1. Hidden node `h_i` (for `i = 2..=n`) holds the pair
//! `(x_i, S_i)` encoded as state `2 x_i + S_i`, where `S_i` is the parity of
//! the bits of `T` up to `i`. Observed leaves use states 0 and 1 only.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{MarkovTreeModel, NodeId, TransitionMatrix, TreeTopology, JOINT_BUDGET};

const K: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct ParitySpec {
    pub n: usize,
    /// Bits entering the parity, a nonempty subset of `1..=n`.
    pub t: BTreeSet<usize>,
    /// Probability that the label is flipped.
    pub alpha: f64,
}

impl ParitySpec {
    pub fn new(n: usize, t: impl IntoIterator<Item = usize>, alpha: f64) -> Result<Self> {
        let spec = ParitySpec {
            n,
            t: t.into_iter().collect(),
            alpha,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParity("need at least one bit".into()));
        }
        if self.t.is_empty() || self.t.iter().any(|&i| i == 0 || i > self.n) {
            return Err(Error::InvalidParity(format!("T must be a nonempty subset of 1..={}", self.n)));
        }
        if !(0.0..0.5).contains(&self.alpha) {
            return Err(Error::InvalidParity(format!("alpha must lie in [0, 1/2), got {}", self.alpha)));
        }
        Ok(())
    }

    fn in_t(&self, i: usize) -> usize {
        usize::from(self.t.contains(&i))
    }
}

fn state(x: usize, s: usize) -> usize {
    2 * x + s
}

fn tm(m: Matrix) -> TransitionMatrix {
    TransitionMatrix::new(m).expect("parity matrices are stochastic by construction")
}

/// Law of `(x_i, S_i)` given the previous partial sum `s`.
fn step_row(spec: &ParitySpec, i: usize, s: usize) -> [f64; K] {
    let mut row = [0.0; K];
    for x in 0..2 {
        row[state(x, s ^ (x & spec.in_t(i)))] += 0.5;
    }
    row
}

/// Label states from partial sum `s`: correct with probability `1 - alpha`.
fn label_row(alpha: f64, s: usize) -> [f64; K] {
    let mut row = [0.0; K];
    row[s] += 1.0 - alpha;
    row[1 - s] += alpha;
    row
}

/// Topology and node ids: leaf `l` is node `l - 1`, `h_i` is node `n + i - 1`.
fn layout(n: usize) -> Result<(TreeTopology, Vec<NodeId>)> {
    let leaf_labels: Vec<(NodeId, usize)> = (1..=n + 1).map(|l| (l - 1, l)).collect();
    if n == 1 {
        return Ok((TreeTopology::from_edges(2, &[(0, 1)], &leaf_labels)?, Vec::new()));
    }
    let hidden: Vec<NodeId> = (2..=n).map(|i| n + i - 1).collect();
    let mut edges = vec![(0, hidden[0])];
    for (j, &h) in hidden.iter().enumerate() {
        edges.push((h, j + 1));
        if j + 1 < hidden.len() {
            edges.push((h, hidden[j + 1]));
        }
    }
    edges.push((*hidden.last().unwrap(), n));
    Ok((TreeTopology::from_edges(2 * n, &edges, &leaf_labels)?, hidden))
}

/// Builds the parity model; `mix` blends every matrix with the identity and
/// the root law with the uniform law by that weight.
fn build(spec: &ParitySpec, mix: f64) -> Result<MarkovTreeModel> {
    spec.validate()?;
    let n = spec.n;
    let (topology, hidden) = layout(n)?;
    let blend = |rows: [[f64; K]; K]| -> TransitionMatrix {
        tm(Matrix::from_fn(K, K, |i, j| {
            (1.0 - mix) * rows[i][j] + if i == j { mix } else { 0.0 }
        }))
    };
    let mut edges = BTreeMap::new();
    // rows 2 and 3 at an observed leaf never occur unsmoothed; they copy rows 0 and 1
    let leaf_rows = |f: &dyn Fn(usize) -> [f64; K]| -> [[f64; K]; K] { [f(0), f(1), f(0), f(1)] };
    if n == 1 {
        let row = |x: usize| label_row(spec.alpha, x & spec.in_t(1));
        edges.insert((0, 1), blend(leaf_rows(&row)));
    } else {
        let first = |x: usize| step_row(spec, 2, x & spec.in_t(1));
        edges.insert((0, hidden[0]), blend(leaf_rows(&first)));
        for (j, &h) in hidden.iter().enumerate() {
            let i = j + 2;
            let emit = |st: usize| {
                let mut r = [0.0; K];
                r[st / 2] = 1.0;
                r
            };
            edges.insert((h, i - 1), blend([emit(0), emit(1), emit(2), emit(3)]));
            let sum = |st: usize| st % 2;
            if let Some(&next) = hidden.get(j + 1) {
                let step = |st: usize| step_row(spec, i + 1, sum(st));
                edges.insert((h, next), blend([step(0), step(1), step(2), step(3)]));
            } else {
                let label = |st: usize| label_row(spec.alpha, sum(st));
                edges.insert((h, n), blend([label(0), label(1), label(2), label(3)]));
            }
        }
    }
    let root_dist: Vec<f64> = [0.5, 0.5, 0.0, 0.0].iter().map(|p| (1.0 - mix) * p + mix / K as f64).collect();
    MarkovTreeModel::new(topology, 0, root_dist, edges)
}

/// The noisy parity model; every one of its matrices is singular.
pub fn parity_hmm(spec: &ParitySpec) -> Result<MarkovTreeModel> {
    build(spec, 0.0)
}

/// Parity model with each matrix replaced by `(1 - tau) P + tau I` and the
/// root law by `(1 - tau) pi + tau / 4`.
pub fn smoothed_parity_model(spec: &ParitySpec, tau: f64) -> Result<MarkovTreeModel> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::InvalidParity(format!("mixing weight must lie in (0, 1], got {tau}")));
    }
    build(spec, tau)
}

/// Exact law of `(x, f(x))` over `{0, 1}^{n + 1}`; index bits run from `x_1`
/// (most significant) to the label (least significant).
#[derive(Clone, Debug, PartialEq)]
pub struct ParityLaw {
    pub n: usize,
    pub probs: Vec<f64>,
}

impl ParityLaw {
    pub fn get(&self, x: &[usize], label: usize) -> f64 {
        let idx = x.iter().fold(0, |acc, &b| 2 * acc + b);
        self.probs[2 * idx + label]
    }
}

/// Enumerates `x` uniformly with the parity label flipped with probability `alpha`.
pub fn noisy_parity_oracle(spec: &ParitySpec) -> Result<ParityLaw> {
    spec.validate()?;
    let n = spec.n;
    let size = 1u128 << (n + 1);
    if size > JOINT_BUDGET {
        return Err(Error::BudgetExceeded {
            entries: size,
            cap: JOINT_BUDGET,
        });
    }
    let mass = 0.5f64.powi(n as i32);
    let mut probs = vec![0.0; 1 << (n + 1)];
    for idx in 0..1usize << n {
        // bit i (1-based) of x sits at position n - i
        let parity = spec.t.iter().map(|&i| (idx >> (n - i)) & 1).fold(0, |a, b| a ^ b);
        probs[2 * idx + parity] = mass * (1.0 - spec.alpha);
        probs[2 * idx + (1 - parity)] = mass * spec.alpha;
    }
    Ok(ParityLaw { n, probs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::tv_leaf_distance;

    fn bits(idx: usize, n: usize) -> Vec<usize> {
        (0..n).map(|i| (idx >> (n - 1 - i)) & 1).collect()
    }

    /// Max deviation between the model's leaf law and the oracle, plus the mass off `{0,1}`.
    fn compare(spec: &ParitySpec) -> (f64, f64) {
        let m = parity_hmm(spec).unwrap();
        let law = noisy_parity_oracle(spec).unwrap();
        let n = spec.n;
        let mut worst = 0.0f64;
        let mut total = 0.0;
        for idx in 0..1usize << n {
            let x = bits(idx, n);
            for y in 0..2 {
                let mut states = x.clone();
                states.push(y);
                let p = m.leaf_probability(&states);
                total += p;
                worst = worst.max((p - law.get(&x, y)).abs());
            }
        }
        (worst, 1.0 - total)
    }

    #[test]
    fn single_bit_passthrough() {
        for n in 1..4 {
            let spec = ParitySpec::new(n, [1], 0.0).unwrap();
            let m = parity_hmm(&spec).unwrap();
            for idx in 0..1usize << n {
                let x = bits(idx, n);
                let mut states = x.clone();
                states.push(1 - x[0]);
                assert_eq!(m.leaf_probability(&states), 0.0);
            }
        }
    }

    #[test]
    fn matches_oracle() {
        let spec = ParitySpec::new(3, [1, 3], 0.1).unwrap();
        let (worst, missing) = compare(&spec);
        assert!(worst < 1e-12 && missing.abs() < 1e-12);
        for n in 1..=6 {
            for mask in 1..1usize << n {
                let t: Vec<usize> = (1..=n).filter(|i| mask >> (i - 1) & 1 == 1).collect();
                for alpha in [0.0, 0.25] {
                    let (worst, missing) = compare(&ParitySpec::new(n, t.clone(), alpha).unwrap());
                    assert!(worst < 1e-12 && missing.abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn oracle_by_hand() {
        let law = noisy_parity_oracle(&ParitySpec::new(2, [1, 2], 0.25).unwrap()).unwrap();
        assert!((law.get(&[0, 0], 0) - 0.25 * 0.75).abs() < 1e-15);
        assert!((law.get(&[1, 0], 0) - 0.25 * 0.25).abs() < 1e-15);
        let clean = noisy_parity_oracle(&ParitySpec::new(2, [2], 0.0).unwrap()).unwrap();
        assert_eq!(clean.get(&[0, 1], 1), 0.25);
        assert_eq!(clean.get(&[0, 1], 0), 0.0);
    }

    #[test]
    fn specs_are_checked() {
        assert!(ParitySpec::new(3, [1], 0.5).is_err());
        assert!(ParitySpec::new(3, Vec::<usize>::new(), 0.1).is_err());
        assert!(ParitySpec::new(3, [4], 0.1).is_err());
        assert!(smoothed_parity_model(&ParitySpec::new(3, [1], 0.1).unwrap(), 0.0).is_err());
    }

    #[test]
    fn every_matrix_is_singular() {
        let spec = ParitySpec::new(5, [2, 3, 5], 0.1).unwrap();
        let m = parity_hmm(&spec).unwrap();
        for (u, v) in m.directed_edges() {
            assert!(m.edge_matrix(u, v).unwrap().det_abs() < 1e-15);
        }
    }

    #[test]
    fn smoothing_restores_determinants() {
        let spec = ParitySpec::new(4, [1, 4], 0.1).unwrap();
        let full = smoothed_parity_model(&spec, 1.0).unwrap();
        for (u, v) in full.directed_edges() {
            assert_eq!(full.edge_matrix(u, v).unwrap(), &TransitionMatrix::identity(4));
        }
        let pure = parity_hmm(&spec).unwrap();
        let half = smoothed_parity_model(&spec, 0.5).unwrap();
        for (u, v) in half.directed_edges() {
            let p = pure.edge_matrix(u, v).unwrap().entries();
            let mixed = p * 0.5 + Matrix::identity(4, 4) * 0.5;
            let d = half.edge_matrix(u, v).unwrap().det_abs();
            assert!(d > 0.0, "({u}, {v}) det {d}");
            assert!((d - crate::linalg::det(&mixed).abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn smoothing_converges_to_parity() {
        let spec = ParitySpec::new(4, [1, 2, 4], 0.1).unwrap();
        let pure = parity_hmm(&spec).unwrap();
        let grid = [0.5, 0.25, 0.1, 0.01];
        let tv: Vec<f64> = grid
            .iter()
            .map(|&t| tv_leaf_distance(&smoothed_parity_model(&spec, t).unwrap(), &pure).unwrap().tv)
            .collect();
        assert!(tv.windows(2).all(|w| w[1] < w[0]), "{tv:?}");
        assert!(tv[3] < 0.05);
    }
}
