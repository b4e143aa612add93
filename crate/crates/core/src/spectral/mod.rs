//! Moment estimators and the spectral recovery of a transition matrix from
//! three leaves.

mod decompose;
mod stats;

pub use decompose::{
    chang_decompose, project_gaussian, separation_check, stochastic_project, AttemptOutcome,
    DecomposeDiagnostics, DecomposeInput, GaussianProbe, ProbeAttempt, SeparationReport,
    SpectralConfig,
};
pub use stats::{
    count_pair, count_single, count_triple, EmpiricalStats, ExactMoments, MomentSource,
    SampleMoments,
};
