//! Indirect gradient estimation: least-squares identification of `θ = [A B]`
//! from closed-loop data, recursive updates, excitation monitoring, and the
//! model-based gradient oracle with its error bounds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lqr::{model_gradient, LevelConstants, LinearSystem, LqrCost};
use crate::matops::{min_eigenvalue, op_norm, Matrix, Vector};
use crate::{Gain, OracleMethod, OracleSample};

/// Updates between full re-factorisations of the information matrix.
pub const REFACTOR_EVERY: usize = 10_000;

/// Recursive least-squares state: `θ̂ = [Â B̂]` and `H = Σ d dᵀ`.
#[derive(Debug, Clone)]
pub struct RlsState {
    theta: Matrix,
    h: Matrix,
    h_inv: Matrix,
    sample_count: usize,
    since_refactor: usize,
    n_x: usize,
}

fn invert_spd(h: &Matrix) -> Result<Matrix> {
    let chol = h.clone().cholesky().ok_or_else(|| {
        Error::InsufficientExcitation("information matrix is not positive definite".into())
    })?;
    Ok(chol.inverse())
}

impl RlsState {
    pub fn theta(&self) -> &Matrix {
        &self.theta
    }

    pub fn a_hat(&self) -> Matrix {
        self.theta.columns(0, self.n_x).into_owned()
    }

    pub fn b_hat(&self) -> Matrix {
        let d = self.theta.ncols();
        self.theta.columns(self.n_x, d - self.n_x).into_owned()
    }

    pub fn information(&self) -> &Matrix {
        &self.h
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    /// `‖θ̂ − [A B]‖` (spectral norm).
    pub fn error_norm(&self, sys: &LinearSystem) -> f64 {
        let mut err = self.theta.clone();
        let n = self.n_x;
        let m = sys.n_u();
        err.columns_mut(0, n).zip_apply(&sys.a, |e, a| *e -= a);
        err.columns_mut(n, m).zip_apply(&sys.b, |e, b| *e -= b);
        op_norm(&err)
    }
}

/// `H₀ = Σ d_t d_tᵀ`, `θ̂₀ = (Σ x_{t+1} d_tᵀ) H₀⁻¹`.
pub fn batch_init(regressors: &[Vector], next_states: &[Vector]) -> Result<RlsState> {
    if regressors.len() != next_states.len() || regressors.is_empty() {
        return Err(Error::Dimension(format!(
            "{} regressors and {} successor states",
            regressors.len(),
            next_states.len()
        )));
    }
    let d = regressors[0].len();
    let n_x = next_states[0].len();
    if d <= n_x {
        return Err(Error::Dimension(format!(
            "regressor length {d} must exceed the state dimension {n_x}"
        )));
    }
    if regressors.len() < d {
        return Err(Error::InsufficientExcitation(format!(
            "{} samples cannot determine {d} regressor directions",
            regressors.len()
        )));
    }
    let mut h = Matrix::zeros(d, d);
    let mut cross = Matrix::zeros(n_x, d);
    for (dv, x) in regressors.iter().zip(next_states) {
        if dv.len() != d || x.len() != n_x {
            return Err(Error::Dimension("inconsistent sample sizes".into()));
        }
        h.ger(1.0, dv, dv, 1.0);
        cross.ger(1.0, x, dv, 1.0);
    }
    let h_inv = invert_spd(&h)?;
    if min_eigenvalue(&h)? <= 1e-12 * (1.0 + h.abs().max()) {
        return Err(Error::InsufficientExcitation(
            "initial information matrix is numerically singular".into(),
        ));
    }
    Ok(RlsState {
        theta: &cross * &h_inv,
        h,
        h_inv,
        sample_count: regressors.len(),
        since_refactor: 0,
        n_x,
    })
}

/// `H_j = H_{j−1} + d dᵀ`, `θ̂_j = θ̂_{j−1} + (x_next − θ̂_{j−1} d) dᵀ H_j⁻¹`.
pub fn rls_update(state: &mut RlsState, d: &Vector, x_next: &Vector) -> Result<()> {
    if d.len() != state.h.nrows() || x_next.len() != state.n_x {
        return Err(Error::Dimension(format!(
            "regressor of length {} and state of length {} for a {}x{} model",
            d.len(),
            x_next.len(),
            state.theta.nrows(),
            state.theta.ncols()
        )));
    }
    state.sample_count += 1;
    state.since_refactor += 1;
    state.h.ger(1.0, d, d, 1.0);
    if state.since_refactor >= REFACTOR_EVERY {
        state.h_inv = invert_spd(&state.h)?;
        state.since_refactor = 0;
    } else {
        // Sherman–Morrison: H_j⁻¹ = H⁻¹ − g gᵀ / (1 + dᵀg), g = H⁻¹d.
        let g = &state.h_inv * d;
        let denom = 1.0 + d.dot(&g);
        state.h_inv.ger(-1.0 / denom, &g, &g, 1.0);
    }
    let innovation = x_next - &state.theta * d;
    let gain = &state.h_inv * d;
    state.theta.ger(1.0, &innovation, &gain, 1.0);
    Ok(())
}

/// Window `N`, stride `M` and excitation floor `α` of the local persistency
/// condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersistencyParams {
    pub window: usize,
    pub stride: usize,
    pub alpha: f64,
}

impl PersistencyParams {
    pub fn new(window: usize, stride: usize, alpha: f64) -> Result<Self> {
        if window == 0 || stride == 0 || !(alpha > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "persistency parameters N = {window}, M = {stride}, alpha = {alpha}"
            )));
        }
        Ok(Self {
            window,
            stride,
            alpha,
        })
    }

    pub fn span(&self) -> usize {
        self.window.max(self.stride)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersistencyReport {
    pub persistent: bool,
    /// Block index `q` of the first block below `α`.
    pub first_violation: Option<usize>,
    /// Smallest block eigenvalue seen.
    pub min_eigenvalue: f64,
    pub blocks: usize,
}

/// Checks `λ_min(Σ_{k<N} d_{Mq+k} d_{Mq+k}ᵀ) ≥ α` for every block
/// `q = 0, …, ⌊n / max(N, M)⌋ − 1`.
pub fn local_persistency_check(regressors: &[Vector], params: &PersistencyParams) -> Result<PersistencyReport> {
    let n = regressors.len();
    if n < params.span() {
        return Err(Error::InvalidArgument(format!(
            "{n} regressors is shorter than max(N, M) = {}",
            params.span()
        )));
    }
    let d = regressors[0].len();
    let blocks = n / params.span();
    let mut first_violation = None;
    let mut lowest = f64::INFINITY;
    for q in 0..blocks {
        let start = params.stride * q;
        let mut gram = Matrix::zeros(d, d);
        for dv in &regressors[start..start + params.window] {
            gram.ger(1.0, dv, dv, 1.0);
        }
        let lam = min_eigenvalue(&gram)?;
        lowest = lowest.min(lam);
        if lam < params.alpha && first_violation.is_none() {
            first_violation = Some(q);
        }
    }
    Ok(PersistencyReport {
        persistent: first_violation.is_none(),
        first_violation,
        min_eigenvalue: lowest,
        blocks,
    })
}

/// Model-based gradient at `K` from the current estimate. `sys` supplies the
/// true `Σ_w` (and, for reporting, the true `θ`).
pub fn indirect_oracle(state: &RlsState, sys: &LinearSystem, cost: &LqrCost, k: &Gain) -> Result<OracleSample> {
    let gradient = model_gradient(&state.a_hat(), &state.b_hat(), cost, &sys.sigma_w, k)?;
    Ok(OracleSample {
        gradient,
        method: OracleMethod::Indirect,
        iteration: state.sample_count,
        samples: state.sample_count as u64,
        dtheta_norm: Some(state.error_norm(sys)),
        zeroth_params: None,
        diverged_rollouts: 0,
    })
}

/// `p(J0, p′_θ(J0)) · E‖Δθ‖`.
pub fn indirect_bias_bound(consts: &LevelConstants, expected_dtheta: f64) -> Result<f64> {
    if !(expected_dtheta >= 0.0) || expected_dtheta > consts.p_theta_prime {
        return Err(Error::OutOfRegime(format!(
            "expected model error {expected_dtheta:e} exceeds p'_theta = {:e}",
            consts.p_theta_prime
        )));
    }
    Ok(consts.p_level * expected_dtheta)
}

/// `V_I = (p p_θ)² + 2 b∇ p p_θ + b∇²` with `p_θ = p′_θ(J0)`.
pub fn indirect_second_moment_bound(consts: &LevelConstants, p_val: f64) -> f64 {
    let pp = p_val * consts.p_theta_prime;
    pp * pp + 2.0 * consts.b_grad * pp + consts.b_grad * consts.b_grad
}

/// `c_x = Tr(Σ_w) [(1 + ‖K̄‖²) x̄ + Tr(Σ_e)]`.
pub fn c_x(trace_w: f64, k_bar_norm: f64, x_bar: f64, trace_e: f64) -> f64 {
    trace_w * ((1.0 + k_bar_norm * k_bar_norm) * x_bar + trace_e)
}

/// `E‖Δθ_n‖ ≤ √(c_x max(N, M)² / (α² (n + t₀)))`.
pub fn rls_error_rate_bound(c_x: f64, params: &PersistencyParams, t0: usize, n: usize) -> f64 {
    let span = params.span() as f64;
    (c_x * span * span / (params.alpha.powi(2) * (n + t0) as f64)).sqrt()
}

/// Smallest `t₀` for which the error stays below `beta` with the probability
/// given by [`rls_probability_floor`].
pub fn rls_t0_threshold(c_x: f64, params: &PersistencyParams, beta: f64) -> f64 {
    let span = params.span() as f64;
    (c_x * span * span / (params.alpha.powi(2) * beta * beta))
        .max(params.window as f64)
        .max(params.stride as f64)
}

/// `1 − √(c_x max(N, M)² / (β² α² t₀))`.
pub fn rls_probability_floor(c_x: f64, params: &PersistencyParams, beta: f64, t0: usize) -> f64 {
    let span = params.span() as f64;
    1.0 - (c_x * span * span / (beta * beta * params.alpha.powi(2) * t0 as f64)).sqrt()
}
