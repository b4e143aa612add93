//! Eigen-decomposition of the probed pair operator and the projections around it.

use nalgebra::{Complex, Schur};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::model::TransitionMatrix;
use crate::rng::{substream, Domain};

/// Tolerances of one decomposition.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SpectralConfig {
    /// Minimum accepted gap between real eigenvalues.
    pub sep_tol: f64,
    /// Largest imaginary part truncated to zero.
    pub imag_tol: f64,
    /// Smallest accepted `|det P^{ab}|`.
    pub cond_floor: f64,
    pub max_probe_retries: usize,
    /// Accepted `||L X - X diag(v)||_1` relative to `||L||_1`.
    pub residual_tol: f64,
    /// Raise `sep_tol` to `k^2` times the estimated perturbation of `L` when
    /// sample counts are known.
    pub noise_scaled_sep: bool,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        SpectralConfig {
            sep_tol: 1e-6,
            imag_tol: 1e-8,
            cond_floor: 1e-8,
            max_probe_retries: 8,
            residual_tol: 1e-8,
            noise_scaled_sep: false,
        }
    }
}

impl SpectralConfig {
    /// Defaults for `m` samples over `k` states: `cond_floor = 10 k / sqrt(m)`.
    pub fn sampled(k: usize, m: usize) -> Self {
        SpectralConfig {
            cond_floor: 10.0 * k as f64 / (m as f64).sqrt(),
            noise_scaled_sep: true,
            ..SpectralConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.sep_tol, self.imag_tol, self.cond_floor, self.residual_tol];
        if positive.iter().any(|&x| !(x > 0.0)) || self.max_probe_retries == 0 {
            return Err(Error::InvalidConfig(
                "spectral tolerances must be positive and max_probe_retries at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Standard normal probe vector tagged with the substream it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianProbe {
    pub u: Vec<f64>,
    pub probe_seed: u64,
    pub index: u64,
    pub attempt: u64,
}

impl GaussianProbe {
    /// Draws from substream `(probe_seed, PROBES, index)`, stream `attempt`.
    pub fn draw(k: usize, probe_seed: u64, index: u64, attempt: u64) -> Self {
        let mut rng = substream(probe_seed, Domain::Probes, index, attempt);
        let u = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
        GaussianProbe {
            u,
            probe_seed,
            index,
            attempt,
        }
    }
}

/// `sum_gamma U_gamma * slice_gamma`.
pub fn project_gaussian(slices: &[Matrix], u: &[f64]) -> Matrix {
    let k = slices[0].nrows();
    let mut out = Matrix::zeros(k, k);
    for (s, &w) in slices.iter().zip(u) {
        out += s * w;
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeparationReport {
    pub pass: bool,
    pub min_gap: f64,
    pub max_imag: f64,
}

/// Passes when all imaginary parts are within `imag_tol` and real parts are `sep_tol` apart.
pub fn separation_check(eigenvalues: &[Complex<f64>], sep_tol: f64, imag_tol: f64) -> SeparationReport {
    let max_imag = eigenvalues.iter().fold(0.0f64, |a, z| a.max(z.im.abs()));
    let mut re: Vec<f64> = eigenvalues.iter().map(|z| z.re).collect();
    re.sort_by(f64::total_cmp);
    let min_gap = re.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    SeparationReport {
        pass: max_imag <= imag_tol && min_gap >= sep_tol,
        min_gap,
        max_imag,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum AttemptOutcome {
    Accepted,
    NotSeparated { min_gap: f64, sep_tol: f64 },
    NotReal { max_imag: f64 },
    Residual { residual: f64 },
    Degenerate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeAttempt {
    pub probe_seed: u64,
    pub index: u64,
    pub attempt: u64,
    pub outcome: AttemptOutcome,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct DecomposeDiagnostics {
    pub attempts: Vec<ProbeAttempt>,
    pub pair_det: f64,
    pub eigenvalues: Vec<f64>,
    pub min_gap: f64,
    /// `||L X - X diag(v)||_1 / ||L||_1` of the accepted decomposition.
    pub residual: f64,
}

impl DecomposeDiagnostics {
    pub fn retries(&self) -> usize {
        self.attempts.len().saturating_sub(1)
    }
}

/// Inputs of one decomposition.
#[derive(Clone, Copy, Debug)]
pub struct DecomposeInput<'a> {
    /// Leaf labels of the pair, for error reporting.
    pub leaves: (usize, usize),
    pub pair: &'a Matrix,
    pub slices: &'a [Matrix],
    pub probe_seed: u64,
    /// Distinguishes decompositions sharing one probe seed.
    pub index: u64,
    /// `min_i N^a_i` when the moments are empirical.
    pub min_count: Option<u64>,
}

/// Recovers `X = P^{ar}` up to column order from `P^{ab}` and the `(a, b, c)` slices.
///
/// Columns of the eigenvector matrix are scaled to unit 1-norm with their
/// largest entry positive, then rescaled by `eta = X^{-1} 1` so that rows sum to one.
pub fn chang_decompose(input: DecomposeInput<'_>, cfg: &SpectralConfig) -> Result<(Matrix, DecomposeDiagnostics)> {
    let k = input.pair.nrows();
    let pair_det = linalg::det(input.pair);
    if !(pair_det.abs() >= cfg.cond_floor) {
        return Err(Error::IllConditionedPair {
            a: input.leaves.0,
            b: input.leaves.1,
            det: pair_det.abs(),
        });
    }
    let pair_inv_norm = linalg::inverse(input.pair).map(|m| linalg::norm1(&m)).unwrap_or(f64::INFINITY);
    let mut diag = DecomposeDiagnostics {
        pair_det: pair_det.abs(),
        ..DecomposeDiagnostics::default()
    };
    let mut worst_gap = f64::INFINITY;
    let mut worst_imag = 0.0f64;
    let mut saw_gap_failure = false;
    for attempt in 0..cfg.max_probe_retries as u64 {
        let probe = GaussianProbe::draw(k, input.probe_seed, input.index, attempt);
        let record = |outcome| ProbeAttempt {
            probe_seed: input.probe_seed,
            index: input.index,
            attempt,
            outcome,
        };
        let projected = project_gaussian(input.slices, &probe.u);
        let Some(l) = linalg::right_solve(&projected, input.pair) else {
            return Err(Error::IllConditionedPair {
                a: input.leaves.0,
                b: input.leaves.1,
                det: 0.0,
            });
        };
        let l_norm = linalg::norm1(&l);
        let sep_tol = match (cfg.noise_scaled_sep, input.min_count) {
            (true, Some(n)) => {
                let u_norm: f64 = probe.u.iter().map(|x| x.abs()).sum();
                let eps = pair_inv_norm * (u_norm + l_norm) / (n.max(1) as f64).sqrt();
                cfg.sep_tol.max((k * k) as f64 * eps)
            }
            _ => cfg.sep_tol,
        };
        let Some(schur) = Schur::try_new(l.clone(), f64::EPSILON, 10_000) else {
            diag.attempts.push(record(AttemptOutcome::Degenerate));
            continue;
        };
        let eig: Vec<Complex<f64>> = schur.complex_eigenvalues().iter().copied().collect();
        let sep = separation_check(&eig, sep_tol, cfg.imag_tol);
        if !sep.pass {
            if sep.max_imag > cfg.imag_tol {
                worst_imag = worst_imag.max(sep.max_imag);
                diag.attempts.push(record(AttemptOutcome::NotReal { max_imag: sep.max_imag }));
            } else {
                saw_gap_failure = true;
                worst_gap = worst_gap.min(sep.min_gap);
                diag.attempts.push(record(AttemptOutcome::NotSeparated {
                    min_gap: sep.min_gap,
                    sep_tol,
                }));
            }
            continue;
        }
        let values: Vec<f64> = eig.iter().map(|z| z.re).collect();
        let Some(x) = eigenvectors(&l, &values).and_then(|xh| rescale_rows(&xh)) else {
            diag.attempts.push(record(AttemptOutcome::Degenerate));
            continue;
        };
        let residual = linalg::norm1(&(&l * &x - &x * Matrix::from_diagonal(&values.clone().into()))) / l_norm.max(f64::MIN_POSITIVE);
        if residual > cfg.residual_tol {
            diag.attempts.push(record(AttemptOutcome::Residual { residual }));
            continue;
        }
        diag.attempts.push(record(AttemptOutcome::Accepted));
        diag.eigenvalues = values;
        diag.min_gap = sep.min_gap;
        diag.residual = residual;
        return Ok((x, diag));
    }
    if saw_gap_failure || worst_imag == 0.0 {
        Err(Error::SeparationFailure {
            attempts: cfg.max_probe_retries,
            min_gap: if worst_gap.is_finite() { worst_gap } else { 0.0 },
        })
    } else {
        Err(Error::NonRealSpectrum {
            attempts: cfg.max_probe_retries,
            max_imag: worst_imag,
        })
    }
}

/// Unit 1-norm null vectors of `L - lambda I`, largest-magnitude entry positive.
fn eigenvectors(l: &Matrix, values: &[f64]) -> Option<Matrix> {
    let k = l.nrows();
    let mut x = Matrix::zeros(k, k);
    for (col, &lambda) in values.iter().enumerate() {
        let shifted = l - Matrix::identity(k, k) * lambda;
        let svd = shifted.svd(false, true);
        let v_t = svd.v_t?;
        let (idx, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))?;
        let mut v: Vec<f64> = v_t.row(idx).iter().copied().collect();
        let norm: f64 = v.iter().map(|z| z.abs()).sum();
        if !(norm > 0.0) {
            return None;
        }
        let lead = v.iter().copied().fold(0.0f64, |a, z| if z.abs() > a.abs() { z } else { a });
        let scale = lead.signum() / norm;
        for z in &mut v {
            *z *= scale;
        }
        for i in 0..k {
            x[(i, col)] = v[i];
        }
    }
    Some(x)
}

/// `X diag(eta)` with `eta = X^{-1} 1`.
fn rescale_rows(xh: &Matrix) -> Option<Matrix> {
    let k = xh.nrows();
    let eta = linalg::solve(xh, &Matrix::from_element(k, 1, 1.0))?;
    if eta.iter().any(|e| !e.is_finite()) {
        return None;
    }
    let mut x = xh.clone();
    for j in 0..k {
        for i in 0..k {
            x[(i, j)] *= eta[(j, 0)];
        }
    }
    Some(x)
}

/// Clips negative entries and divides every row by its sum.
pub fn stochastic_project(m: &Matrix) -> Result<TransitionMatrix> {
    let mut out = m.map(|x| if x > 0.0 { x } else { 0.0 });
    for (row, mut r) in out.row_iter_mut().enumerate() {
        let s: f64 = r.iter().sum();
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::DeadRow { row });
        }
        r /= s;
    }
    Ok(TransitionMatrix::renormalized(out))
}
