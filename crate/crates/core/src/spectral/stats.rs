//! Count-based moment estimators and their exact counterparts.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{LeafSamples, MarkovTreeModel};

/// Raw and normalised leaf statistics for requested pairs and triples.
///
/// Leaves are addressed by label (1-based). Conditional estimators divide by
/// the count of the first leaf: `pair_hat(a, b)[(i, j)] = N^{ab}_{ij} / N^a_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalStats {
    k: usize,
    m: usize,
    single: BTreeMap<usize, Vec<u64>>,
    pair: BTreeMap<(usize, usize), Vec<u64>>,
    triple: BTreeMap<(usize, usize, usize), Vec<u64>>,
    strict: bool,
}

fn check_label(samples: &LeafSamples, a: usize) -> Result<()> {
    if a == 0 || a > samples.n() {
        return Err(Error::InvalidConfig(format!("leaf {a} is not in the sample")));
    }
    Ok(())
}

pub fn count_single(samples: &LeafSamples, a: usize) -> Vec<u64> {
    let mut c = vec![0u64; samples.k()];
    for row in samples.rows() {
        c[row[a - 1] as usize] += 1;
    }
    c
}

/// `N^{ab}_{ij}`, row-major in `(i, j)`.
pub fn count_pair(samples: &LeafSamples, a: usize, b: usize) -> Vec<u64> {
    let k = samples.k();
    let mut c = vec![0u64; k * k];
    for row in samples.rows() {
        c[row[a - 1] as usize * k + row[b - 1] as usize] += 1;
    }
    c
}

/// `N^{abc}_{ij gamma}`, row-major in `(i, j, gamma)`.
pub fn count_triple(samples: &LeafSamples, a: usize, b: usize, c: usize) -> Vec<u64> {
    let k = samples.k();
    let mut n = vec![0u64; k * k * k];
    for row in samples.rows() {
        n[(row[a - 1] as usize * k + row[b - 1] as usize) * k + row[c - 1] as usize] += 1;
    }
    n
}

impl EmpiricalStats {
    /// Counts every leaf, every requested pair and every requested triple.
    pub fn compute(
        samples: &LeafSamples,
        pairs: &[(usize, usize)],
        triples: &[(usize, usize, usize)],
        strict: bool,
    ) -> Result<Self> {
        for &(a, b) in pairs {
            check_label(samples, a)?;
            check_label(samples, b)?;
        }
        for &(a, b, c) in triples {
            check_label(samples, a)?;
            check_label(samples, b)?;
            check_label(samples, c)?;
        }
        let single = (1..=samples.n())
            .into_par_iter()
            .map(|a| (a, count_single(samples, a)))
            .collect();
        let pair = pairs
            .par_iter()
            .map(|&(a, b)| ((a, b), count_pair(samples, a, b)))
            .collect();
        let triple = triples
            .par_iter()
            .map(|&(a, b, c)| ((a, b, c), count_triple(samples, a, b, c)))
            .collect();
        Ok(EmpiricalStats {
            k: samples.k(),
            m: samples.m(),
            single,
            pair,
            triple,
            strict,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn single_counts(&self, a: usize) -> Option<&[u64]> {
        self.single.get(&a).map(Vec::as_slice)
    }

    pub fn pair_counts(&self, a: usize, b: usize) -> Option<&[u64]> {
        self.pair.get(&(a, b)).map(Vec::as_slice)
    }

    pub fn triple_counts(&self, a: usize, b: usize, c: usize) -> Option<&[u64]> {
        self.triple.get(&(a, b, c)).map(Vec::as_slice)
    }

    /// States never observed at leaf `a`.
    pub fn unobserved(&self, a: usize) -> Vec<usize> {
        self.single[&a]
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == 0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn pi_hat(&self, a: usize) -> Vec<f64> {
        self.single[&a].iter().map(|&c| c as f64 / self.m as f64).collect()
    }

    fn missing(what: &str) -> Error {
        Error::InvalidConfig(format!("{what} was not requested from the sample"))
    }

    pub fn pair_hat(&self, a: usize, b: usize) -> Result<Matrix> {
        let counts = self.pair.get(&(a, b)).ok_or_else(|| Self::missing("pair"))?;
        conditional(self.k, a, &self.single[&a], counts, self.k, self.strict)
    }

    /// Slices `P^{ab,gamma}` for `gamma = 0..k`.
    pub fn triple_hat(&self, a: usize, b: usize, c: usize) -> Result<Vec<Matrix>> {
        let counts = self.triple.get(&(a, b, c)).ok_or_else(|| Self::missing("triple"))?;
        triple_slices(self.k, a, &self.single[&a], counts, self.strict)
    }
}

/// Rows `i` of `counts` (length `k * width`) divided by `n_a[i]`.
fn conditional(k: usize, a: usize, n_a: &[u64], counts: &[u64], width: usize, strict: bool) -> Result<Matrix> {
    let mut m = Matrix::zeros(k, width);
    for i in 0..k {
        if n_a[i] == 0 {
            if strict {
                return Err(Error::UnobservedState { leaf: a, state: i });
            }
            // lenient: an unseen row carries no information
            for j in 0..width {
                m[(i, j)] = 1.0 / width as f64;
            }
            continue;
        }
        for j in 0..width {
            m[(i, j)] = counts[i * width + j] as f64 / n_a[i] as f64;
        }
    }
    Ok(m)
}

fn triple_slices(k: usize, a: usize, n_a: &[u64], counts: &[u64], strict: bool) -> Result<Vec<Matrix>> {
    let flat = conditional(k, a, n_a, counts, k * k, strict)?;
    Ok((0..k)
        .map(|g| Matrix::from_fn(k, k, |i, j| flat[(i, j * k + g)] * if n_a[i] == 0 { k as f64 } else { 1.0 }))
        .collect())
}

/// Leaf moments consumed by the learner and the topology code.
///
/// Implemented by sample counts and by the exact law of a known model.
pub trait MomentSource: Sync {
    fn k(&self) -> usize;
    fn leaf_count(&self) -> usize;
    /// `None` for exact sources.
    fn sample_count(&self) -> Option<usize>;
    fn marginal(&self, a: usize) -> Result<Vec<f64>>;
    /// Conditional pair matrix `P^{ab}`.
    fn pair(&self, a: usize, b: usize) -> Result<Matrix>;
    /// Joint pair matrix `F_{ab}`.
    fn joint_pair(&self, a: usize, b: usize) -> Result<Matrix>;
    /// Slices `P^{ab,gamma}`.
    fn triple(&self, a: usize, b: usize, c: usize) -> Result<Vec<Matrix>>;
    /// Smallest count among the states of `a` (`None` for exact sources).
    fn min_count(&self, a: usize) -> Option<u64>;
}

/// Counts computed on demand from a sample matrix.
#[derive(Clone, Copy, Debug)]
pub struct SampleMoments<'a> {
    samples: &'a LeafSamples,
    strict: bool,
}

impl<'a> SampleMoments<'a> {
    pub fn new(samples: &'a LeafSamples, strict: bool) -> Self {
        SampleMoments { samples, strict }
    }

    pub fn samples(&self) -> &LeafSamples {
        self.samples
    }
}

impl MomentSource for SampleMoments<'_> {
    fn k(&self) -> usize {
        self.samples.k()
    }

    fn leaf_count(&self) -> usize {
        self.samples.n()
    }

    fn sample_count(&self) -> Option<usize> {
        Some(self.samples.m())
    }

    fn marginal(&self, a: usize) -> Result<Vec<f64>> {
        check_label(self.samples, a)?;
        let m = self.samples.m() as f64;
        Ok(count_single(self.samples, a).into_iter().map(|c| c as f64 / m).collect())
    }

    fn pair(&self, a: usize, b: usize) -> Result<Matrix> {
        check_label(self.samples, a)?;
        check_label(self.samples, b)?;
        let k = self.k();
        conditional(k, a, &count_single(self.samples, a), &count_pair(self.samples, a, b), k, self.strict)
    }

    fn joint_pair(&self, a: usize, b: usize) -> Result<Matrix> {
        check_label(self.samples, a)?;
        check_label(self.samples, b)?;
        let k = self.k();
        let m = self.samples.m() as f64;
        let c = count_pair(self.samples, a, b);
        Ok(Matrix::from_fn(k, k, |i, j| c[i * k + j] as f64 / m))
    }

    fn triple(&self, a: usize, b: usize, c: usize) -> Result<Vec<Matrix>> {
        check_label(self.samples, a)?;
        check_label(self.samples, b)?;
        check_label(self.samples, c)?;
        triple_slices(
            self.k(),
            a,
            &count_single(self.samples, a),
            &count_triple(self.samples, a, b, c),
            self.strict,
        )
    }

    fn min_count(&self, a: usize) -> Option<u64> {
        count_single(self.samples, a).into_iter().min()
    }
}

/// Exact leaf moments of a known model.
#[derive(Clone, Debug)]
pub struct ExactMoments {
    model: MarkovTreeModel,
    marginals: Vec<Vec<f64>>,
}

impl ExactMoments {
    pub fn new(model: MarkovTreeModel) -> Self {
        let marginals = model.marginals();
        ExactMoments { model, marginals }
    }

    pub fn model(&self) -> &MarkovTreeModel {
        &self.model
    }

    fn node(&self, a: usize) -> Result<usize> {
        if a == 0 || a > self.model.topology().leaf_count() {
            return Err(Error::InvalidConfig(format!("leaf {a} is not in the model")));
        }
        Ok(self.model.topology().leaf(a))
    }
}

impl MomentSource for ExactMoments {
    fn k(&self) -> usize {
        self.model.k()
    }

    fn leaf_count(&self) -> usize {
        self.model.topology().leaf_count()
    }

    fn sample_count(&self) -> Option<usize> {
        None
    }

    fn marginal(&self, a: usize) -> Result<Vec<f64>> {
        Ok(self.marginals[self.node(a)?].clone())
    }

    fn pair(&self, a: usize, b: usize) -> Result<Matrix> {
        let f = self.joint_pair(a, b)?;
        let pi = self.marginal(a)?;
        let k = self.k();
        if let Some((index, &value)) = pi.iter().enumerate().find(|(_, &p)| !(p > 0.0)) {
            return Err(Error::ZeroMarginal { index, value });
        }
        Ok(Matrix::from_fn(k, k, |i, j| f[(i, j)] / pi[i]))
    }

    fn joint_pair(&self, a: usize, b: usize) -> Result<Matrix> {
        let (u, v) = (self.node(a)?, self.node(b)?);
        Ok(self.model.exact_joint(&[u, v])?.as_matrix())
    }

    fn triple(&self, a: usize, b: usize, c: usize) -> Result<Vec<Matrix>> {
        let (u, v, w) = (self.node(a)?, self.node(b)?, self.node(c)?);
        let t = self.model.exact_joint(&[u, v, w])?;
        let pi = self.marginal(a)?;
        if let Some((index, &value)) = pi.iter().enumerate().find(|(_, &p)| !(p > 0.0)) {
            return Err(Error::ZeroMarginal { index, value });
        }
        let k = self.k();
        Ok((0..k)
            .map(|g| Matrix::from_fn(k, k, |i, j| t.get(&[i, j, g]) / pi[i]))
            .collect())
    }

    fn min_count(&self, _a: usize) -> Option<u64> {
        None
    }
}
