use thiserror::Error;

use crate::model::NodeId;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report.
///
/// Variants are grouped by the CLI exit code they map to (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    // validation failures
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid parity specification: {0}")]
    InvalidParity(String),
    #[error("topology mismatch: {0}")]
    TopologyMismatch(String),
    #[error("line {line}, column {column}: {message}")]
    Format {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("state {state} never observed at leaf {leaf}")]
    UnobservedState { leaf: usize, state: usize },
    #[error("rejection sampling gave up after {attempts} attempts: {reason}")]
    GenerationTimeout { attempts: usize, reason: String },

    // algorithmic failures
    #[error("marginal entry {index} is not strictly positive ({value})")]
    ZeroMarginal { index: usize, value: f64 },
    #[error("singular model: {0}")]
    SingularModel(String),
    #[error("joint table of {entries} entries exceeds the budget of {cap}")]
    BudgetExceeded { entries: u128, cap: u128 },
    #[error("pair matrix for leaves ({a}, {b}) is ill-conditioned: |det| = {det:e}")]
    IllConditionedPair { a: usize, b: usize, det: f64 },
    #[error("{which} is ill-conditioned: |det| = {det:e}")]
    IllConditionedFactor { which: String, det: f64 },
    #[error("eigenvalues not separated after {attempts} probe draws (smallest gap {min_gap:e})")]
    SeparationFailure { attempts: usize, min_gap: f64 },
    #[error("spectrum not real after {attempts} probe draws (largest imaginary part {max_imag:e})")]
    NonRealSpectrum { attempts: usize, max_imag: f64 },
    #[error("row {row} has no strictly positive entry")]
    DeadRow { row: usize },
    #[error("node {node} has degenerate estimated marginal entry {value:e}")]
    MarginalDegenerate { node: NodeId, value: f64 },
    #[error("insufficient signal: {0}")]
    InsufficientSignal(String),
    #[error("decided quartets are inconsistent when inserting leaf {leaf}")]
    QuartetConflict { leaf: usize },
    #[error("partition finished with {uncovered} edges uncovered")]
    CoverageFailure { uncovered: usize },
    #[error("no leaf reachable from node {from}")]
    Unreachable { from: NodeId },
    #[error("edge ({}, {}): {source}", edge.0, edge.1)]
    Edge {
        edge: (NodeId, NodeId),
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at_edge(self, u: NodeId, v: NodeId) -> Error {
        Error::Edge {
            edge: (u, v),
            source: Box::new(self),
        }
    }

    /// The innermost error, with edge context stripped.
    pub fn root_cause(&self) -> &Error {
        match self {
            Error::Edge { source, .. } => source.root_cause(),
            other => other,
        }
    }

    /// Process exit code: 2 validation, 3 algorithmic, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self.root_cause() {
            Error::InvalidTopology(_)
            | Error::InvalidModel(_)
            | Error::InvalidConfig(_)
            | Error::InvalidParity(_)
            | Error::TopologyMismatch(_)
            | Error::Format { .. }
            | Error::UnobservedState { .. }
            | Error::GenerationTimeout { .. } => 2,
            Error::Io(_) => 4,
            _ => 3,
        }
    }
}
