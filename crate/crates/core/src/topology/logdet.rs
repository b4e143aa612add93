//! Log-det distances between leaves.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::model::{LeafSamples, MarkovTreeModel, NodeId};
use crate::spectral::{MomentSource, SampleMoments};

/// `|det F|` at or below this is treated as zero.
pub const DET_FLOOR: f64 = 1e-300;

/// `-ln |det F|` of a joint frequency matrix, `+inf` below [`DET_FLOOR`].
pub fn logdet_pair(f: &Matrix) -> f64 {
    let d = linalg::det(f).abs();
    if d <= DET_FLOOR {
        f64::INFINITY
    } else {
        -d.ln()
    }
}

/// Tree-additive distance of a joint matrix: `-ln |det F| + (1/2) sum ln pi_a + (1/2) sum ln pi_b`,
/// with the marginals read off the row and column sums of `F`.
pub fn additive_logdet(f: &Matrix) -> f64 {
    let raw = logdet_pair(f);
    if raw.is_infinite() {
        return raw;
    }
    let rows: f64 = f.row_iter().map(|r| r.sum().ln()).sum();
    let cols: f64 = f.column_iter().map(|c| c.sum().ln()).sum();
    let psi = raw + 0.5 * rows + 0.5 * cols;
    if psi.is_finite() {
        psi
    } else {
        f64::INFINITY
    }
}

/// Edge weight `-(1/2) ln |det P^{uv}| - (1/2) ln |det P^{vu}|`.
pub fn edge_logdet_weight(model: &MarkovTreeModel, u: NodeId, v: NodeId) -> Result<f64> {
    let forward = model.directed_matrix(u, v)?;
    let backward = model.directed_matrix(v, u)?;
    let (a, b) = (forward.det_abs(), backward.det_abs());
    if a <= DET_FLOOR || b <= DET_FLOOR {
        return Err(Error::SingularModel(format!("edge ({u}, {v}) has a zero determinant")));
    }
    Ok(-0.5 * a.ln() - 0.5 * b.ln())
}

/// Symmetric matrix of additive log-det distances between leaves `1..=n`.
#[derive(Clone, Debug, PartialEq)]
pub struct LogDetMetric {
    n: usize,
    psi: Vec<f64>,
}

impl LogDetMetric {
    /// Builds a metric from `psi(a, b)` evaluated for `a < b`.
    pub fn from_fn(n: usize, psi: impl Fn(usize, usize) -> f64 + Sync) -> Self {
        let pairs: Vec<(usize, usize)> = (1..=n).flat_map(|a| (a + 1..=n).map(move |b| (a, b))).collect();
        let values: Vec<f64> = pairs.par_iter().map(|&(a, b)| psi(a, b)).collect();
        let mut out = vec![0.0; n * n];
        for (&(a, b), &v) in pairs.iter().zip(&values) {
            out[(a - 1) * n + b - 1] = v;
            out[(b - 1) * n + a - 1] = v;
        }
        LogDetMetric { n, psi: out }
    }

    /// Distances from the pair joints of any moment source.
    pub fn from_moments<M: MomentSource + ?Sized>(moments: &M) -> Result<Self> {
        let n = moments.leaf_count();
        let pairs: Vec<(usize, usize)> = (1..=n).flat_map(|a| (a + 1..=n).map(move |b| (a, b))).collect();
        let joints: Vec<Matrix> = pairs
            .par_iter()
            .map(|&(a, b)| moments.joint_pair(a, b))
            .collect::<Result<_>>()?;
        let mut out = vec![0.0; n * n];
        for (&(a, b), f) in pairs.iter().zip(&joints) {
            let v = additive_logdet(f);
            out[(a - 1) * n + b - 1] = v;
            out[(b - 1) * n + a - 1] = v;
        }
        Ok(LogDetMetric { n, psi: out })
    }

    pub fn from_samples(samples: &LeafSamples) -> Result<Self> {
        Self::from_moments(&SampleMoments::new(samples, false))
    }

    /// Rebuilds a metric from row-major lower-triangular values (`rows[i]` holds `psi(i + 2, 1..=i + 1)`).
    pub fn from_lower_triangle(n: usize, rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() + 1 != n || rows.iter().enumerate().any(|(i, r)| r.len() != i + 1) {
            return Err(Error::InvalidConfig("lower triangle has the wrong shape".into()));
        }
        Ok(Self::from_fn(n, |a, b| rows[b - 2][a - 1]))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Distance between leaf labels `a` and `b`.
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.psi[(a - 1) * self.n + b - 1]
    }

    /// Pairs `a < b` with `psi(a, b) <= 2 * delta_cap`.
    pub fn short_pairs(&self, delta_cap: f64) -> Vec<(usize, usize)> {
        (1..=self.n)
            .flat_map(|a| (a + 1..=self.n).map(move |b| (a, b)))
            .filter(|&(a, b)| self.is_short(a, b, delta_cap))
            .collect()
    }

    pub fn is_short(&self, a: usize, b: usize, delta_cap: f64) -> bool {
        let v = self.get(a, b);
        v.is_finite() && v <= 2.0 * delta_cap
    }
}
