//! Exact LQR quantities for a known system: average cost, stationary
//! covariance, policy gradient, the model-based gradient built from an
//! estimated `(Â, B̂)`, and the level-set constants used by the convergence
//! analysis.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matops::{
    self, lyapunov_obs_stable, op_norm, solve_dare, symmetrize, Matrix,
    SymmetricPsdMatrix,
};
use crate::{Gain, STABILITY_MARGIN};

/// `x_{t+1} = A x_t + B u_t + w_t`, `w_t ~ N(0, Σ_w)`, `x_0 ~ N(0, Σ_0)`;
/// `Σ_e` is the dither covariance used by identification experiments.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub a: Matrix,
    pub b: Matrix,
    pub sigma_w: SymmetricPsdMatrix,
    pub sigma_0: SymmetricPsdMatrix,
    pub sigma_e: SymmetricPsdMatrix,
}

impl LinearSystem {
    pub fn new(
        a: Matrix,
        b: Matrix,
        sigma_w: SymmetricPsdMatrix,
        sigma_0: SymmetricPsdMatrix,
        sigma_e: SymmetricPsdMatrix,
    ) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() || b.nrows() != n || b.ncols() == 0 || n == 0 {
            return Err(Error::Dimension(format!(
                "A is {}x{}, B is {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        if sigma_w.dim() != n || sigma_0.dim() != n || sigma_e.dim() != b.ncols() {
            return Err(Error::Dimension(format!(
                "covariances are {}, {} and {} square for n_x = {n}, n_u = {}",
                sigma_w.dim(),
                sigma_0.dim(),
                sigma_e.dim(),
                b.ncols()
            )));
        }
        if !matops::all_finite(&a) || !matops::all_finite(&b) {
            return Err(Error::Numeric("system matrices contain non-finite entries".into()));
        }
        if sigma_w.min_eigenvalue() <= 0.0 {
            return Err(Error::NotPsd("Σ_w must be positive definite".into()));
        }
        if sigma_0.min_eigenvalue() <= 0.0 {
            return Err(Error::NotPsd("Σ_0 must be positive definite".into()));
        }
        let m = b.ncols();
        solve_dare(&a, &b, &Matrix::identity(n, n), &Matrix::identity(m, m)).map_err(|e| {
            Error::InvalidArgument(format!("(A, B) does not appear stabilizable: {e}"))
        })?;
        Ok(Self {
            a,
            b,
            sigma_w,
            sigma_0,
            sigma_e,
        })
    }

    pub fn n_x(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_u(&self) -> usize {
        self.b.ncols()
    }

    pub fn closed_loop(&self, k: &Gain) -> Matrix {
        &self.a + &self.b * k
    }

    /// Same system with a different process-noise covariance.
    pub fn with_sigma_w(&self, sigma_w: SymmetricPsdMatrix) -> Result<Self> {
        Self::new(
            self.a.clone(),
            self.b.clone(),
            sigma_w,
            self.sigma_0.clone(),
            self.sigma_e.clone(),
        )
    }

    fn check_gain(&self, k: &Gain) -> Result<()> {
        if k.nrows() != self.n_u() || k.ncols() != self.n_x() {
            return Err(Error::Dimension(format!(
                "gain is {}x{}, expected {}x{}",
                k.nrows(),
                k.ncols(),
                self.n_u(),
                self.n_x()
            )));
        }
        Ok(())
    }
}

/// Weights of the stage cost `xᵀQx + uᵀRu`.
#[derive(Debug, Clone)]
pub struct LqrCost {
    pub q: Matrix,
    pub r: Matrix,
}

impl LqrCost {
    pub fn new(q: Matrix, r: Matrix) -> Result<Self> {
        for (name, m) in [("Q", &q), ("R", &r)] {
            let psd = SymmetricPsdMatrix::new(m.clone())?;
            if psd.min_eigenvalue() <= 0.0 {
                return Err(Error::NotPsd(format!("{name} must be positive definite")));
            }
        }
        Ok(Self {
            q: symmetrize(&q),
            r: symmetrize(&r),
        })
    }

    /// `Q + KᵀRK`.
    pub fn stage_weight(&self, k: &Gain) -> Matrix {
        &self.q + k.transpose() * &self.r * k
    }

    fn check(&self, sys: &LinearSystem) -> Result<()> {
        if self.q.nrows() != sys.n_x() || self.r.nrows() != sys.n_u() {
            return Err(Error::Dimension(format!(
                "Q is {}x{}, R is {}x{} for n_x = {}, n_u = {}",
                self.q.nrows(),
                self.q.ncols(),
                self.r.nrows(),
                self.r.ncols(),
                sys.n_x(),
                sys.n_u()
            )));
        }
        Ok(())
    }
}

/// Everything computed for one gain in a single pass.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub cost: f64,
    pub gradient: Matrix,
    /// `P_K`
    pub p: Matrix,
    /// `Σ_K`
    pub sigma: Matrix,
    /// `E_K = (R + BᵀP_K B)K + BᵀP_K A`
    pub e: Matrix,
}

/// Solves both Lyapunov equations for `A_K = a + b·k` and assembles the
/// gradient. Returns `None` when the closed loop is not certified stable:
/// a positive definite `Σ` solving `Σ = A_K Σ A_Kᵀ + Σ_w` with `Σ_w ≻ 0` exists
/// exactly when `ρ(A_K) < 1`, so a Cholesky factorisation of the computed `Σ`
/// replaces an eigenvalue computation.
pub(crate) fn evaluate_model(
    a: &Matrix,
    b: &Matrix,
    sigma_w: &Matrix,
    cost: &LqrCost,
    k: &Gain,
) -> Option<Evaluation> {
    let f = a + b * k;
    if !matops::all_finite(&f) {
        return None;
    }
    let ft = f.transpose();
    let sigma = lyapunov_obs_stable(&ft, sigma_w).ok()?;
    if !matops::all_finite(&sigma) || sigma.clone().cholesky().is_none() {
        return None;
    }
    let q_k = cost.stage_weight(k);
    let p = lyapunov_obs_stable(&f, &q_k).ok()?;
    let bt_p = b.transpose() * &p;
    let e = (&cost.r + &bt_p * b) * k + &bt_p * a;
    let gradient = (&e * &sigma) * 2.0;
    let c = p.component_mul(sigma_w).sum();
    if !c.is_finite() || c <= 0.0 {
        return None;
    }
    Some(Evaluation {
        cost: c,
        gradient,
        p,
        sigma,
        e,
    })
}

fn unstable_error(f: &Matrix, model: bool) -> Error {
    match matops::spectral_radius(f) {
        Ok(radius) if radius >= 1.0 - STABILITY_MARGIN => {
            if model {
                Error::ModelUnstable { radius }
            } else {
                Error::Unstable { radius }
            }
        }
        Ok(radius) => Error::Numeric(format!(
            "Lyapunov solve failed for a closed loop with spectral radius {radius}"
        )),
        Err(e) => e,
    }
}

/// Cost, gradient, `P_K`, `Σ_K` and `E_K` for a stabilizing gain.
pub fn evaluate(sys: &LinearSystem, cost: &LqrCost, k: &Gain) -> Result<Evaluation> {
    sys.check_gain(k)?;
    cost.check(sys)?;
    evaluate_model(&sys.a, &sys.b, &sys.sigma_w, cost, k)
        .ok_or_else(|| unstable_error(&sys.closed_loop(k), false))
}

/// `ρ(A + BK) < 1 − 1e-12`.
pub fn is_stabilizing(sys: &LinearSystem, k: &Gain) -> Result<bool> {
    sys.check_gain(k)?;
    let f = sys.closed_loop(k);
    if !matops::all_finite(&f) {
        return Ok(false);
    }
    Ok(matops::spectral_radius(&f)? < 1.0 - STABILITY_MARGIN)
}

fn require_stable(sys: &LinearSystem, k: &Gain) -> Result<Matrix> {
    sys.check_gain(k)?;
    let f = sys.closed_loop(k);
    let radius = matops::spectral_radius(&f)?;
    if radius >= 1.0 - STABILITY_MARGIN {
        return Err(Error::Unstable { radius });
    }
    Ok(f)
}

/// `Σ_K`, the stationary state covariance under `u = Kx`.
pub fn avg_covariance(sys: &LinearSystem, k: &Gain) -> Result<SymmetricPsdMatrix> {
    let f = require_stable(sys, k)?;
    matops::solve_lyapunov_ctrl(&f, &sys.sigma_w)
}

/// `P_K`, the value matrix under `u = Kx`.
pub fn value_matrix(sys: &LinearSystem, cost: &LqrCost, k: &Gain) -> Result<SymmetricPsdMatrix> {
    cost.check(sys)?;
    let f = require_stable(sys, k)?;
    matops::solve_lyapunov_obs(&f, &cost.stage_weight(k))
}

/// `C(K) = Tr(P_K Σ_w)`.
pub fn cost(sys: &LinearSystem, cost: &LqrCost, k: &Gain) -> Result<f64> {
    let p = value_matrix(sys, cost, k)?;
    Ok(p.component_mul(&sys.sigma_w).sum())
}

/// `∇C(K) = 2 E_K Σ_K`.
pub fn exact_gradient(sys: &LinearSystem, cost: &LqrCost, k: &Gain) -> Result<Matrix> {
    cost.check(sys)?;
    let f = require_stable(sys, k)?;
    let p = lyapunov_obs_stable(&f, &cost.stage_weight(k))?;
    let sigma = lyapunov_obs_stable(&f.transpose(), &sys.sigma_w)?;
    let bt_p = sys.b.transpose() * &p;
    let e = (&cost.r + &bt_p * &sys.b) * k + &bt_p * &sys.a;
    Ok(e * sigma * 2.0)
}

/// Gradient of the cost evaluated on the model `(Â, B̂)` with the true `Σ_w`.
pub fn model_gradient(
    a_hat: &Matrix,
    b_hat: &Matrix,
    cost: &LqrCost,
    sigma_w: &SymmetricPsdMatrix,
    k: &Gain,
) -> Result<Matrix> {
    let n = a_hat.nrows();
    if !a_hat.is_square()
        || b_hat.nrows() != n
        || k.nrows() != b_hat.ncols()
        || k.ncols() != n
        || sigma_w.dim() != n
        || cost.q.nrows() != n
        || cost.r.nrows() != b_hat.ncols()
    {
        return Err(Error::Dimension(format!(
            "model_gradient: Â {}x{}, B̂ {}x{}, K {}x{}",
            a_hat.nrows(),
            a_hat.ncols(),
            b_hat.nrows(),
            b_hat.ncols(),
            k.nrows(),
            k.ncols()
        )));
    }
    evaluate_model(a_hat, b_hat, sigma_w, cost, k)
        .map(|ev| ev.gradient)
        .ok_or_else(|| unstable_error(&(a_hat + b_hat * k), true))
}

/// `C(K′) − C(K)` computed without cancellation:
/// `2 Tr(Σ_{K′} Dᵀ E_K) + Tr(Σ_{K′} Dᵀ (R + BᵀP_K B) D)` with `D = K′ − K`.
pub fn cost_difference(sys: &LinearSystem, cost: &LqrCost, k: &Gain, k_new: &Gain) -> Result<f64> {
    let base = evaluate(sys, cost, k)?;
    let next = evaluate(sys, cost, k_new)?;
    let d = k_new - k;
    let s = &cost.r + sys.b.transpose() * &base.p * &sys.b;
    let lin = (&next.sigma * d.transpose() * &base.e).trace();
    let quad = (&next.sigma * d.transpose() * s * &d).trace();
    Ok(2.0 * lin + quad)
}

/// Second-order remainder `C(K′) − C(K) − ⟨∇C(K), K′ − K⟩`, evaluated through
/// the cost-difference identity and a Lyapunov equation for `Σ_{K′} − Σ_K`, so
/// it stays accurate for perturbations far below `√ε · C(K)`.
pub fn taylor_remainder(sys: &LinearSystem, cost: &LqrCost, k: &Gain, k_new: &Gain) -> Result<f64> {
    let base = evaluate(sys, cost, k)?;
    let next_f = sys.closed_loop(k_new);
    if evaluate(sys, cost, k_new).is_err() {
        return Err(unstable_error(&next_f, false));
    }
    let d = k_new - k;
    let f = sys.closed_loop(k);
    let bd = &sys.b * &d;
    let bd_sigma = &bd * &base.sigma;
    let forcing = &bd_sigma * f.transpose() + &f * bd_sigma.transpose() + &bd_sigma * bd.transpose();
    let d_sigma = lyapunov_obs_stable(&next_f.transpose(), &forcing)?;
    let sigma_next = &base.sigma + &d_sigma;
    let s = &cost.r + sys.b.transpose() * &base.p * &sys.b;
    let dt = d.transpose();
    let cross = (&d_sigma * &dt * &base.e).trace();
    let quad = (&sigma_next * &dt * s * &d).trace();
    Ok(2.0 * cross + quad)
}

/// `K ∈ S(J0)`: stabilizing with `C(K) ≤ J0`.
pub fn in_level_set(sys: &LinearSystem, cost: &LqrCost, k: &Gain, j0: f64) -> bool {
    match is_stabilizing(sys, k) {
        Ok(true) => self::cost(sys, cost, k).map(|c| c <= j0).unwrap_or(false),
        _ => false,
    }
}

/// Frobenius inner product `Tr(XᵀY)`.
pub fn frobenius_inner(x: &Matrix, y: &Matrix) -> f64 {
    x.component_mul(y).sum()
}

/// System-level scalars from which every level-set constant is built. The
/// methods evaluate the cost-dependent expressions at an arbitrary level `c`.
#[derive(Debug, Clone, Serialize)]
pub struct LevelBounds {
    pub n_x: usize,
    pub n_u: usize,
    pub c_star: f64,
    pub norm_a: f64,
    pub norm_b: f64,
    pub norm_r: f64,
    pub norm_r_inv: f64,
    pub lambda_q: f64,
    pub lambda_r: f64,
    pub lambda_w: f64,
    pub lambda_0: f64,
    pub trace_w: f64,
    pub norm_sigma_0: f64,
    /// `‖Σ_w⁻²‖`
    pub norm_w_inv_sq: f64,
    pub norm_k_star: f64,
    pub norm_sigma_k_star: f64,
}

impl LevelBounds {
    pub fn new(sys: &LinearSystem, cost: &LqrCost) -> Result<Self> {
        cost.check(sys)?;
        let dare = solve_dare(&sys.a, &sys.b, &cost.q, &cost.r)?;
        let ev = evaluate(sys, cost, &dare.k)?;
        let w_inv = sys
            .sigma_w
            .as_matrix()
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numeric("Σ_w is singular".into()))?;
        let r_inv = cost
            .r
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numeric("R is singular".into()))?;
        Ok(Self {
            n_x: sys.n_x(),
            n_u: sys.n_u(),
            c_star: ev.cost,
            norm_a: op_norm(&sys.a),
            norm_b: op_norm(&sys.b),
            norm_r: op_norm(&cost.r),
            norm_r_inv: op_norm(&r_inv),
            lambda_q: matops::min_eigenvalue(&cost.q)?,
            lambda_r: matops::min_eigenvalue(&cost.r)?,
            lambda_w: sys.sigma_w.min_eigenvalue(),
            lambda_0: sys.sigma_0.min_eigenvalue(),
            trace_w: sys.sigma_w.trace(),
            norm_sigma_0: op_norm(&sys.sigma_0),
            norm_w_inv_sq: op_norm(&(&w_inv * &w_inv)),
            norm_k_star: op_norm(&dare.k),
            norm_sigma_k_star: op_norm(&ev.sigma),
        })
    }

    pub fn alpha6(&self, c: f64) -> f64 {
        let gap = (c - self.c_star).max(0.0);
        (gap / self.lambda_w * (self.norm_r + self.norm_b.powi(2) * c / self.lambda_w)).sqrt()
    }

    /// Bound on `‖∇C(K)‖_F` over `S(c)`.
    pub fn b_grad(&self, c: f64) -> f64 {
        2.0 * (c / self.lambda_q) * self.alpha6(c)
    }

    /// Bound on `‖K‖` over `S(c)`.
    pub fn b_k(&self, c: f64) -> f64 {
        (self.norm_b * self.norm_a * c / self.lambda_w + self.alpha6(c)) / self.lambda_r
    }

    /// Perturbation radius of the Lipschitz lemma.
    pub fn h(&self, c: f64) -> f64 {
        self.lambda_w * self.lambda_q
            / (4.0 * c * self.norm_b * (self.norm_a + self.norm_b * self.b_k(c) + 1.0))
    }

    pub fn h_sigma(&self, c: f64) -> f64 {
        c / (self.lambda_q * self.h(c))
    }

    pub fn alpha5(&self, c: f64) -> f64 {
        let bk = self.b_k(c);
        let ratio = c / (self.lambda_w * self.lambda_q);
        2.0 * self.norm_r
            * ratio
            * ratio
            * (bk * bk * self.norm_b * (self.norm_a + self.norm_b * bk + 1.0)
                + 2.0 * bk
                + self.norm_k_star)
    }

    /// Lipschitz constant of the cost.
    pub fn h_cost(&self, c: f64) -> f64 {
        self.alpha5(c) * self.trace_w
    }

    pub fn alpha3(&self, c: f64) -> f64 {
        2.0 * self.h_sigma(c) * self.alpha6(c)
    }

    pub fn alpha4(&self, c: f64) -> f64 {
        self.norm_r
            + self.norm_b.powi(2) * c / self.lambda_0
            + self.alpha5(c)
                * (self.norm_b * self.norm_a
                    + (self.b_k(c) + self.norm_k_star) * self.norm_b.powi(2))
    }

    /// Lipschitz constant of the gradient.
    pub fn h_grad(&self, c: f64) -> f64 {
        self.alpha3(c) + self.alpha4(c)
    }

    /// Gradient-domination constant.
    pub fn mu(&self) -> f64 {
        0.25 * self.norm_sigma_k_star * self.norm_w_inv_sq * self.norm_r_inv
    }

    /// Quasi-smoothness constant.
    pub fn smoothness(&self, c: f64) -> f64 {
        64.0 * c / (self.lambda_q * self.lambda_w)
            * (self.norm_b.powi(2) * c + self.lambda_w * self.norm_r)
    }

    /// Quasi-smoothness radius.
    pub fn radius(&self, c: f64) -> f64 {
        self.lambda_q.powi(2) * self.lambda_w.powi(2)
            / (32.0
                * self.norm_b
                * c
                * c
                * (1.0 + self.norm_a + self.norm_b * self.b_k(c)))
    }

    /// Finite-horizon cost error constant: `|C^{(ℓ)}(K) − C(K)| ≤ ε′(C(K))/ℓ`.
    pub fn eps_prime(&self, c: f64) -> f64 {
        let lq = self.lambda_q;
        let lw = self.lambda_w;
        2.0 * c / lw * (self.norm_sigma_0 / (lq * lw) + c / (lq * lw * lw) + 1.0 / lq)
    }

    /// Level-set lower bound on the admissible model error.
    pub fn p_theta_prime(&self, c: f64) -> f64 {
        let bk = self.b_k(c);
        let p2 = (1.0 + self.norm_a + self.norm_b * bk) * (1.0 + bk);
        1.0 / (4.0 * (c / self.lambda_q).max(c / self.lambda_w) * p2)
    }

    /// Gradient error constant `p = p₁ + 2p₄(p₂ + p₃)` evaluated with a
    /// gain-norm bound `k_norm` and value-matrix norm `p_norm`.
    pub fn p_terms(&self, c: f64, k_norm: f64, p_norm: f64, p_theta: f64) -> f64 {
        let na = self.norm_a;
        let nb = self.norm_b;
        let growth = (1.0 + na + nb * k_norm) * (1.0 + k_norm);
        let cq = c / self.lambda_q;
        let cw = c / self.lambda_w;
        let gap = (c - self.c_star).max(0.0);
        let p1 = 8.0 * (self.norm_r + nb * nb * cq * gap).sqrt() * growth * cw * cw;
        let p2 = (cq + (nb + p_theta) * 4.0 * cq * cq * growth)
            * (na + nb * k_norm + (1.0 + k_norm) * p_theta);
        let p3 = nb * p_norm * (1.0 + k_norm);
        let p4 = cw + 4.0 * cw * cw * growth * p_theta;
        p1 + 2.0 * p4 * (p2 + p3)
    }

    /// `p(c, p_θ)` in its level-set form: `‖K‖ → b_K(c)`, `‖P_K‖ → c/λ₁(Σ_w)`.
    pub fn p_level(&self, c: f64, p_theta: f64) -> f64 {
        self.p_terms(c, self.b_k(c), c / self.lambda_w, p_theta)
    }

    /// `α₁(J0, Δ̄) = n_u·c_mom·b∇² + 3b∇⁴ + 2n_u·b∇³·Δ̄`, with `c_mom` the
    /// oracle second-moment bound and `Δ̄` the bias bound.
    pub fn alpha1(&self, j0: f64, second_moment: f64, bias: f64) -> f64 {
        let b = self.b_grad(j0);
        let nu = self.n_u as f64;
        nu * second_moment * b * b + 3.0 * b.powi(4) + 2.0 * nu * b.powi(3) * bias
    }

    pub fn alpha2(&self, j0: f64) -> f64 {
        (self.n_u as f64).powi(3) * self.b_grad(j0).powi(2)
    }
}

/// The analysis constants of a level set `S(J0)`.
#[derive(Debug, Clone, Serialize)]
pub struct LevelConstants {
    pub j0: f64,
    pub c_star: f64,
    pub b_grad: f64,
    pub b_k: f64,
    pub h: f64,
    pub h_sigma: f64,
    pub h_cost: f64,
    pub h_grad: f64,
    pub mu: f64,
    pub smoothness: f64,
    pub radius: f64,
    /// `α₁` with an exact oracle: second moment `b∇(J0)²` and zero bias.
    pub alpha1: f64,
    pub alpha2: f64,
    pub eps_prime: f64,
    pub p_theta_prime: f64,
    /// `p(J0, p′_θ(J0))`
    pub p_level: f64,
    pub c_d: f64,
    pub norm_k_star: f64,
    #[serde(skip)]
    pub bounds: LevelBounds,
}

impl LevelConstants {
    pub fn new(sys: &LinearSystem, cost: &LqrCost, j0: f64) -> Result<Self> {
        let bounds = LevelBounds::new(sys, cost)?;
        Self::from_bounds(bounds, j0)
    }

    pub fn from_bounds(bounds: LevelBounds, j0: f64) -> Result<Self> {
        if !(j0 > bounds.c_star) || !j0.is_finite() {
            return Err(Error::InvalidLevel {
                j0,
                c_star: bounds.c_star,
            });
        }
        let b_grad = bounds.b_grad(j0);
        let p_theta_prime = bounds.p_theta_prime(j0);
        let p_level = bounds.p_level(j0, p_theta_prime);
        Ok(Self {
            j0,
            c_star: bounds.c_star,
            b_grad,
            b_k: bounds.b_k(j0),
            h: bounds.h(j0),
            h_sigma: bounds.h_sigma(j0),
            h_cost: bounds.h_cost(j0),
            h_grad: bounds.h_grad(j0),
            mu: bounds.mu(),
            smoothness: bounds.smoothness(j0),
            radius: bounds.radius(j0),
            alpha1: bounds.alpha1(j0, b_grad * b_grad, 0.0),
            alpha2: bounds.alpha2(j0),
            eps_prime: bounds.eps_prime(j0),
            p_theta_prime,
            p_level,
            c_d: bounds.n_x.max(bounds.n_u) as f64 * p_level,
            norm_k_star: bounds.norm_k_star,
            bounds,
        })
    }
}

/// `level_constants(sys, cost, J0)`.
pub fn level_constants(sys: &LinearSystem, cost: &LqrCost, j0: f64) -> Result<LevelConstants> {
    LevelConstants::new(sys, cost, j0)
}

/// Admissible model-error radius `p_θ(K)` for a specific stabilizing gain.
pub fn p_theta(sys: &LinearSystem, cost: &LqrCost, k: &Gain) -> Result<f64> {
    let ev = evaluate(sys, cost, k)?;
    Ok(p_theta_of(sys, k, &ev))
}

fn p_theta_of(sys: &LinearSystem, k: &Gain, ev: &Evaluation) -> f64 {
    let big = op_norm(&ev.sigma).max(op_norm(&ev.p));
    1.0 / (4.0 * big * (1.0 + op_norm(&sys.closed_loop(k))) * (1.0 + op_norm(k)))
}

/// `p(C(K), p_θ(K))·‖Δθ‖`, the bound on `‖∇̂_I C − ∇C‖` for model error `‖Δθ‖ ≤ p_θ(K)`.
pub fn gradient_error_bound(
    consts: &LevelConstants,
    sys: &LinearSystem,
    cost: &LqrCost,
    k: &Gain,
    delta_theta_norm: f64,
) -> Result<f64> {
    let ev = evaluate(sys, cost, k)?;
    let pt = p_theta_of(sys, k, &ev);
    if !(delta_theta_norm >= 0.0) || delta_theta_norm > pt {
        return Err(Error::OutOfRegime(format!(
            "model error {delta_theta_norm:e} exceeds p_theta = {pt:e}"
        )));
    }
    Ok(consts.bounds.p_level(ev.cost, pt) * delta_theta_norm)
}
