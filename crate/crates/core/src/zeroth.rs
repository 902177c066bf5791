//! Zeroth-order gradient estimation from rollout costs at gains perturbed on
//! a Frobenius sphere, and the matching bias / second-moment bounds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lqr::{self, LevelBounds, LevelConstants, LinearSystem, LqrCost};
use crate::matops::Matrix;
use crate::sim::{RngStream, RolloutKernel, RolloutScratch};
use crate::{Gain, OracleMethod, OracleSample};

/// Exploration radius `v`, rollout length `ℓ` and rollout count `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroOrderParams {
    pub v: f64,
    pub ell: usize,
    pub n: usize,
}

impl ZeroOrderParams {
    pub fn new(v: f64, ell: usize, n: usize) -> Result<Self> {
        if !(v > 0.0) || !v.is_finite() || ell == 0 || n == 0 {
            return Err(Error::InvalidArgument(format!(
                "zeroth-order parameters v = {v}, ell = {ell}, n = {n}"
            )));
        }
        Ok(Self { v, ell, n })
    }
}

/// Uniform draw from the sphere `‖U‖_F = v` in `R^{n_u × n_x}`.
pub fn sample_sphere(n_u: usize, n_x: usize, v: f64, rng: &mut RngStream) -> Matrix {
    loop {
        let mut u = Matrix::from_fn(n_u, n_x, |_, _| rng.normal());
        let norm = u.norm();
        if norm > 1e-300 {
            u *= v / norm;
            return u;
        }
    }
}

/// `(1/n) Σ_k (n_x n_u / v²) c(K + U_k) U_k` for an arbitrary cost evaluator.
/// `eval` returns `None` for a perturbed gain whose cost is unavailable
/// (overflowed rollout, unstable exact cost); such samples are dropped and
/// counted, and the average runs over the remaining ones.
pub fn zeroth_order_estimate<F>(
    k: &Gain,
    params: &ZeroOrderParams,
    rng: &mut RngStream,
    mut eval: F,
) -> Result<(Matrix, usize)>
where
    F: FnMut(&Matrix, &mut RngStream) -> Option<f64>,
{
    let (n_u, n_x) = (k.nrows(), k.ncols());
    let scale = (n_x * n_u) as f64 / (params.v * params.v);
    let mut acc = Matrix::zeros(n_u, n_x);
    let mut dropped = 0;
    for _ in 0..params.n {
        let u = sample_sphere(n_u, n_x, params.v, rng);
        let perturbed = k + &u;
        match eval(&perturbed, rng) {
            Some(c) if c.is_finite() => acc += u * (scale * c),
            _ => dropped += 1,
        }
    }
    let used = params.n - dropped;
    if used == 0 {
        return Err(Error::EstimationFailure(format!(
            "all {} perturbed rollouts diverged",
            params.n
        )));
    }
    Ok((acc / used as f64, dropped))
}

/// Rollout-based direct estimator bound to one system and cost.
#[derive(Debug, Clone)]
pub struct DirectEstimator {
    kernel: RolloutKernel,
    scratch: RolloutScratch,
    flat: Vec<f64>,
}

impl DirectEstimator {
    pub fn new(sys: &LinearSystem, cost: &LqrCost) -> Result<Self> {
        let kernel = RolloutKernel::new(sys, cost)?;
        let scratch = kernel.scratch();
        Ok(Self {
            kernel,
            scratch,
            flat: Vec::new(),
        })
    }

    pub fn estimate(&mut self, k: &Gain, params: &ZeroOrderParams, rng: &mut RngStream) -> Result<OracleSample> {
        let kernel = &self.kernel;
        let scratch = &mut self.scratch;
        let flat = &mut self.flat;
        let (g, dropped) = zeroth_order_estimate(k, params, rng, |kk, rng| {
            flat.clear();
            for i in 0..kk.nrows() {
                for j in 0..kk.ncols() {
                    flat.push(kk[(i, j)]);
                }
            }
            let (c, diverged) = kernel.cost(flat, params.ell, rng, scratch);
            (!diverged).then_some(c)
        })?;
        Ok(OracleSample {
            gradient: g,
            method: OracleMethod::Direct,
            iteration: 0,
            samples: (params.n * params.ell) as u64,
            dtheta_norm: None,
            zeroth_params: Some(*params),
            diverged_rollouts: dropped,
        })
    }
}

/// Algorithm-level entry point: one direct gradient estimate at `K`.
pub fn direct_gradient_estimate(
    sys: &LinearSystem,
    cost: &LqrCost,
    k: &Gain,
    params: &ZeroOrderParams,
    rng: &mut RngStream,
) -> Result<OracleSample> {
    if k.nrows() != sys.n_u() || k.ncols() != sys.n_x() {
        return Err(Error::Dimension(format!(
            "gain is {}x{}, expected {}x{}",
            k.nrows(),
            k.ncols(),
            sys.n_u(),
            sys.n_x()
        )));
    }
    DirectEstimator::new(sys, cost)?.estimate(k, params, rng)
}

/// `Δ̄_D(c, v, ℓ) = n_x n_u ε′(c + v h_C(c)) / (v ℓ) + v h_∇(c)`; `ℓ` may be
/// infinite.
pub fn direct_bias_bound_at(bounds: &LevelBounds, c: f64, v: f64, ell: f64) -> f64 {
    let nn = (bounds.n_x * bounds.n_u) as f64;
    let shifted = c + v * bounds.h_cost(c);
    nn * bounds.eps_prime(shifted) / (v * ell) + v * bounds.h_grad(c)
}

/// `V_D(c, v, ℓ, n) = φ + n_x² n_u² / (n v²) · [c + ε′(c + v h_C)/ℓ + v h_C]²`
/// with `φ = b∇(c)² + Δ̄_D² + b∇(c) Δ̄_D`.
pub fn direct_second_moment_bound_at(bounds: &LevelBounds, c: f64, v: f64, ell: f64, n: f64) -> f64 {
    let nn = (bounds.n_x * bounds.n_u) as f64;
    let b = bounds.b_grad(c);
    let bias = direct_bias_bound_at(bounds, c, v, ell);
    let phi = b * b + bias * bias + b * bias;
    let hc = bounds.h_cost(c);
    let bracket = c + bounds.eps_prime(c + v * hc) / ell + v * hc;
    phi + nn * nn / (n * v * v) * bracket * bracket
}

fn check_radius(consts: &LevelConstants, c: f64, v: f64) -> Result<()> {
    let limit = consts.bounds.h(c).min(consts.norm_k_star);
    if !(v > 0.0) || v > limit {
        return Err(Error::OutOfRegime(format!(
            "exploration radius {v:e} exceeds min(h, |K*|) = {limit:e}"
        )));
    }
    Ok(())
}

/// Bias bound at the gain `K` (evaluated at `C(K)`).
pub fn direct_bias_bound(
    consts: &LevelConstants,
    sys: &LinearSystem,
    cost: &LqrCost,
    k: &Gain,
    v: f64,
    ell: usize,
) -> Result<f64> {
    let c = lqr::cost(sys, cost, k)?;
    check_radius(consts, c, v)?;
    Ok(direct_bias_bound_at(&consts.bounds, c, v, ell as f64))
}

/// Second-moment bound at the gain `K` (evaluated at `C(K)`).
pub fn direct_second_moment_bound(
    consts: &LevelConstants,
    sys: &LinearSystem,
    cost: &LqrCost,
    k: &Gain,
    v: f64,
    ell: usize,
    n: usize,
) -> Result<f64> {
    let c = lqr::cost(sys, cost, k)?;
    check_radius(consts, c, v)?;
    Ok(direct_second_moment_bound_at(&consts.bounds, c, v, ell as f64, n as f64))
}
