//! Data-driven policy gradient methods for the stochastic linear quadratic
//! regulator.
//!
//! * [`matops`]: Lyapunov / Riccati solvers and small dense helpers.
//! * [`lqr`]: exact cost, covariance and gradient, plus the level-set constants.
//! * [`sim`]: seeded plant simulation.
//! * [`ident`]: recursive least squares and the indirect (model-based) oracle.
//! * [`zeroth`]: the zeroth-order (direct) gradient estimator.
//! * [`sgd`]: step-size schedules, schedule validation and the SGD drivers.
//! * [`presets`]: the scalar, 3×3 benchmark and Boeing 747 problems.

pub mod error;
pub mod ident;
pub mod lqr;
pub mod matops;
pub mod presets;
pub mod sgd;
pub mod sim;
pub mod zeroth;

pub use error::{Error, Result};
pub use matops::{Matrix, SymmetricPsdMatrix, Vector};

/// Feedback gain for the policy `u = K x` (`n_u × n_x`).
pub type Gain = Matrix;

/// A closed loop counts as stable when its spectral radius is below `1 − STABILITY_MARGIN`.
pub const STABILITY_MARGIN: f64 = 1e-12;

/// Which estimator produced an [`OracleSample`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMethod {
    Exact,
    Indirect,
    Direct,
    Synthetic,
}

/// A stochastic gradient estimate and how it was obtained.
#[derive(Debug, Clone)]
pub struct OracleSample {
    pub gradient: Matrix,
    pub method: OracleMethod,
    pub iteration: usize,
    /// Plant transitions consumed to produce the estimate.
    pub samples: u64,
    /// `‖θ̂ − θ‖` when the true system is known (experiments only).
    pub dtheta_norm: Option<f64>,
    /// `(v, ℓ, n)` for the direct estimator.
    pub zeroth_params: Option<zeroth::ZeroOrderParams>,
    /// Direct estimator rollouts that overflowed and were left out.
    pub diverged_rollouts: usize,
}
