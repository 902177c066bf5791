use thiserror::Error;

/// Errors raised by the numerical kernels, estimators and drivers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("closed loop is not Schur stable (spectral radius {radius})")]
    Unstable { radius: f64 },

    #[error("estimated closed loop is not Schur stable (spectral radius {radius})")]
    ModelUnstable { radius: f64 },

    #[error("{what} did not converge after {iterations} iterations (last residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("matrix is not symmetric positive semidefinite: {0}")]
    NotPsd(String),

    #[error("insufficient excitation: {0}")]
    InsufficientExcitation(String),

    #[error("invalid level J0 = {j0}: must exceed the optimal cost {c_star}")]
    InvalidLevel { j0: f64, c_star: f64 },

    #[error("outside the validity regime of the bound: {0}")]
    OutOfRegime(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("gradient estimation failed: {0}")]
    EstimationFailure(String),
}

pub type Result<T> = std::result::Result<T, Error>;
