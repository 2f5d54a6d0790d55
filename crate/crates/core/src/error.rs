use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{context}: no convergence after {iterations} iterations (last residual {residual:.3e})")]
    NonConvergence {
        context: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("matrix is not self-adjoint: max |X - X*| = {asymmetry:.3e} exceeds {threshold:.3e}")]
    NotSelfAdjoint { asymmetry: f64, threshold: f64 },

    #[error("eigensolver exceeded its iteration cap on a {dim}x{dim} matrix (max |entry| {scale:.3e})")]
    EigenSolver { dim: usize, scale: f64 },

    #[error("{context}: singular denominator (|value| = {magnitude:.3e})")]
    SingularDenominator {
        context: &'static str,
        magnitude: f64,
    },

    #[error("{context}: contraction factor {factor:.6} is not below 1; fixed point is not attracting")]
    ContractionViolation { context: &'static str, factor: f64 },

    #[error("run aborted at iteration {iteration} after {failures} consecutive forward failures: {last}")]
    RunAborted {
        iteration: usize,
        failures: usize,
        last: Box<Error>,
    },

    #[error("malformed spectrum file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by a fixed-point solve that failed to settle.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonConvergence { .. }
            | Error::ContractionViolation { .. }
            | Error::SingularDenominator { .. }
            | Error::EigenSolver { .. } => true,
            Error::RunAborted { .. } => true,
            _ => false,
        }
    }
}
