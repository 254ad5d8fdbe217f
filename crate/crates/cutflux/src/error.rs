//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by mesh construction, cut classification, linear solves
/// and the reconstruction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The interface violates a standing geometric assumption (e.g. the cut of
    /// a triangle is not a single straight segment).
    #[error("unsupported geometry: {0}")]
    UnsupportedGeometry(String),

    /// The interface passes through (or within tolerance of) a mesh vertex,
    /// or a cut fragment is too small to be meaningful.
    #[error("degenerate cut: {0}")]
    DegenerateCut(String),

    /// Iterative solver did not reach the requested residual within its cap.
    #[error("solver failure after {iterations} iterations, relative residual {residual:.3e}")]
    SolverFailure { iterations: usize, residual: f64 },

    /// Rank-deficient square system.
    #[error("singular system (condition estimate {cond:.3e})")]
    SingularSystem { cond: f64 },

    /// A node-patch multiplier system could not be satisfied.
    #[error("inconsistent patch at node {node} (subdomain {subdomain}): residual {residual:.3e}")]
    InconsistentPatch {
        node: usize,
        subdomain: usize,
        residual: f64,
    },

    /// The immersed local basis construction failed on a cut cell.
    #[error("unisolvence failure on cell {cell}: {message}")]
    UnisolvenceFailure { cell: usize, message: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
