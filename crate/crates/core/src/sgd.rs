//! Policy-gradient SGD `K_{i+1} = K_i − η_i ĝ_i`: step-size and estimator
//! schedules, the step-size conditions of the convergence theory, and Monte
//! Carlo drivers for the synthetic, indirect and direct oracles.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ident::{batch_init, rls_update};
use crate::lqr::{self, evaluate, Evaluation, LevelBounds, LevelConstants, LinearSystem, LqrCost};
use crate::matops::{Matrix, Vector};
use crate::sim::{Plant, RngStream};
use crate::zeroth::{zeroth_order_estimate, DirectEstimator, ZeroOrderParams};
use crate::Gain;

/// `K − η ĝ`.
pub fn pg_update(k: &Gain, g_hat: &Matrix, eta: f64) -> Gain {
    k - g_hat * eta
}

/// Step sizes `η_i`, `i ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepSchedule {
    Constant { eta0: f64 },
    /// `η_i = eta0 / ⌈i^κ / divisor⌉`
    PowerFloor { eta0: f64, kappa: f64, divisor: f64 },
}

impl StepSchedule {
    pub fn step(&self, i: usize) -> f64 {
        match *self {
            StepSchedule::Constant { eta0 } => eta0,
            StepSchedule::PowerFloor {
                eta0,
                kappa,
                divisor,
            } => eta0 / ((i as f64).powf(kappa) / divisor).ceil().max(1.0),
        }
    }

    pub fn eta0(&self) -> f64 {
        match *self {
            StepSchedule::Constant { eta0 } | StepSchedule::PowerFloor { eta0, .. } => eta0,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        match *self {
            StepSchedule::Constant { eta0 } => StepSchedule::Constant {
                eta0: eta0 * factor,
            },
            StepSchedule::PowerFloor {
                eta0,
                kappa,
                divisor,
            } => StepSchedule::PowerFloor {
                eta0: eta0 * factor,
                kappa,
                divisor,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            StepSchedule::Constant { eta0 } => eta0 > 0.0 && eta0.is_finite(),
            StepSchedule::PowerFloor {
                eta0,
                kappa,
                divisor,
            } => eta0 > 0.0 && eta0.is_finite() && kappa > 0.0 && divisor > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid step schedule {self:?}")))
        }
    }
}

pub fn step_size(schedule: &StepSchedule, i: usize) -> f64 {
    schedule.step(i)
}

/// `v_i = v0 / ⌈√i / v_divisor⌉`, `ℓ_i = ℓ0 ⌈i / block⌉`, `n_i = n0 ⌈i / block⌉`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectParamSchedule {
    pub v0: f64,
    pub ell0: usize,
    pub n0: usize,
    pub v_divisor: f64,
    pub block: f64,
}

impl DirectParamSchedule {
    pub fn v(&self, i: usize) -> f64 {
        self.v0 / ((i as f64).sqrt() / self.v_divisor).ceil().max(1.0)
    }

    fn growth(&self, i: usize) -> usize {
        ((i as f64) / self.block).ceil().max(1.0) as usize
    }

    pub fn ell(&self, i: usize) -> usize {
        self.ell0 * self.growth(i)
    }

    pub fn n(&self, i: usize) -> usize {
        self.n0 * self.growth(i)
    }

    pub fn params(&self, i: usize) -> ZeroOrderParams {
        ZeroOrderParams {
            v: self.v(i),
            ell: self.ell(i),
            n: self.n(i),
        }
    }
}

/// Estimator parameters for a direct run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DirectParams {
    Fixed(ZeroOrderParams),
    Scheduled(DirectParamSchedule),
}

impl DirectParams {
    pub fn at(&self, i: usize) -> ZeroOrderParams {
        match self {
            DirectParams::Fixed(p) => *p,
            DirectParams::Scheduled(s) => s.params(i),
        }
    }
}

/// Confidence split `(δ1, δ2, δ3)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deltas {
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

impl Default for Deltas {
    fn default() -> Self {
        Self {
            d1: 0.04,
            d2: 0.04,
            d3: 0.02,
        }
    }
}

impl Deltas {
    /// `δ = 1 − (1 − δ1 − δ2)(1 − δ3)`.
    pub fn delta(&self) -> f64 {
        1.0 - (1.0 - self.d1 - self.d2) * (1.0 - self.d3)
    }
}

/// Upper bound on the oracle bias norm `‖Δ_i‖` along the iterations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BiasSequence {
    Zero,
    Constant { scale: f64 },
    /// `scale · i^{−exponent}`
    Power { scale: f64, exponent: f64 },
}

impl BiasSequence {
    pub fn at(&self, i: usize) -> f64 {
        match *self {
            BiasSequence::Zero => 0.0,
            BiasSequence::Constant { scale } => scale,
            BiasSequence::Power { scale, exponent } => scale * (i.max(1) as f64).powf(-exponent),
        }
    }

    fn sup(&self) -> f64 {
        self.at(1)
    }
}

/// Outcome of checking a schedule against the step-size conditions.
#[derive(Debug, Clone, Serialize)]
pub struct ScheduleReport {
    /// `J0 − C(K0)`
    pub epsilon_prime: f64,
    pub epsilon: f64,
    pub mu: f64,
    pub eta_max: f64,
    pub step_below_mu: bool,
    pub sum_eta_sq: f64,
    pub sum_eta_bias: f64,
    /// `δ1 ε / (α1 + c)`
    pub threshold_descent: f64,
    /// `r(J0)² δ3 / c`
    pub threshold_radius: f64,
    /// `r(J0)² δ3 / V_I` when an indirect second-moment bound is supplied.
    pub threshold_radius_indirect: Option<f64>,
    /// `√(δ2 ε / α2)`
    pub threshold_bias: f64,
    pub sum_eta_sq_ok: bool,
    pub sum_eta_bias_ok: bool,
    pub passes: bool,
    /// Largest factor by which `eta0` may be multiplied so that every
    /// condition holds (`0` when a series diverges).
    pub eta0_scale_to_pass: f64,
}

/// Inputs to [`validate_schedule`] beyond the schedule itself.
#[derive(Debug, Clone, Copy)]
pub struct ValidationInputs {
    pub cost_k0: f64,
    /// Oracle second-moment bound `c`.
    pub second_moment: f64,
    pub deltas: Deltas,
    pub horizon: usize,
    /// `V_I(J0, p(J0, p′_θ(J0)))` for the indirect variant of the radius condition.
    pub indirect_second_moment: Option<f64>,
}

fn series(schedule: &StepSchedule, bias: &BiasSequence, horizon: usize) -> (f64, f64) {
    let mut sq = 0.0;
    let mut lin = 0.0;
    for i in 1..=horizon {
        let eta = schedule.step(i);
        sq += eta * eta;
        lin += eta * bias.at(i);
    }
    let h = horizon as f64;
    let (tail_sq, tail_lin) = match *schedule {
        StepSchedule::Constant { .. } => (
            f64::INFINITY,
            if matches!(bias, BiasSequence::Zero) { 0.0 } else { f64::INFINITY },
        ),
        StepSchedule::PowerFloor {
            eta0,
            kappa,
            divisor,
        } => {
            // η_i ≤ eta0·divisor·i^{−κ}
            let c = eta0 * divisor;
            let tail_sq = if 2.0 * kappa > 1.0 {
                c * c * h.powf(1.0 - 2.0 * kappa) / (2.0 * kappa - 1.0)
            } else {
                f64::INFINITY
            };
            let tail_lin = match *bias {
                BiasSequence::Zero => 0.0,
                BiasSequence::Constant { scale } => {
                    if kappa > 1.0 {
                        c * scale * h.powf(1.0 - kappa) / (kappa - 1.0)
                    } else {
                        f64::INFINITY
                    }
                }
                BiasSequence::Power { scale, exponent } => {
                    let p = kappa + exponent;
                    if p > 1.0 {
                        c * scale * h.powf(1.0 - p) / (p - 1.0)
                    } else {
                        f64::INFINITY
                    }
                }
            };
            (tail_sq, tail_lin)
        }
    };
    (sq + tail_sq, lin + tail_lin)
}

/// Evaluates the step-size conditions: `η_i < μ`,
/// `Σ η_i² ≤ min{δ1 ε/(α1 + c), r² δ3/c}` and `Σ η_i ‖Δ_i‖ ≤ √(δ2 ε / α2)`.
/// Infinite sums are a partial sum to `horizon` plus an integral tail bound.
pub fn validate_schedule(
    consts: &LevelConstants,
    schedule: &StepSchedule,
    bias: &BiasSequence,
    inputs: &ValidationInputs,
) -> Result<ScheduleReport> {
    schedule.validate()?;
    if let StepSchedule::PowerFloor { kappa, .. } = *schedule {
        if !(kappa > 0.5 && kappa < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "kappa = {kappa} must lie in (1/2, 1)"
            )));
        }
    }
    if inputs.horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }
    let eps_p = consts.j0 - inputs.cost_k0;
    if !(eps_p > 0.0) {
        return Err(Error::InvalidLevel {
            j0: consts.j0,
            c_star: inputs.cost_k0,
        });
    }
    let epsilon = (((1.0 + 4.0 * eps_p * eps_p).sqrt() - 1.0) / 2.0).powi(2);
    let c = inputs.second_moment;
    let d = inputs.deltas;
    let alpha1 = consts.bounds.alpha1(consts.j0, c, bias.sup());
    let threshold_descent = d.d1 * epsilon / (alpha1 + c);
    let r2 = consts.radius * consts.radius;
    let threshold_radius = r2 * d.d3 / c;
    let threshold_radius_indirect = inputs.indirect_second_moment.map(|v| r2 * d.d3 / v);
    let threshold_bias = (d.d2 * epsilon / consts.alpha2).sqrt();

    let eta_max = schedule.step(1);
    let (sum_sq, sum_lin) = series(schedule, bias, inputs.horizon);
    let sq_limit = threshold_descent
        .min(threshold_radius)
        .min(threshold_radius_indirect.unwrap_or(f64::INFINITY));
    let step_below_mu = eta_max < consts.mu;
    let sum_eta_sq_ok = sum_sq <= sq_limit;
    let sum_eta_bias_ok = sum_lin <= threshold_bias;

    let mut scale = consts.mu / eta_max * (1.0 - 1e-12);
    scale = scale.min(if sum_sq.is_finite() { (sq_limit / sum_sq).sqrt() } else { 0.0 });
    if sum_lin > 0.0 {
        scale = scale.min(if sum_lin.is_finite() { threshold_bias / sum_lin } else { 0.0 });
    }
    Ok(ScheduleReport {
        epsilon_prime: eps_p,
        epsilon,
        mu: consts.mu,
        eta_max,
        step_below_mu,
        sum_eta_sq: sum_sq,
        sum_eta_bias: sum_lin,
        threshold_descent,
        threshold_radius,
        threshold_radius_indirect,
        threshold_bias,
        sum_eta_sq_ok,
        sum_eta_bias_ok,
        passes: step_below_mu && sum_eta_sq_ok && sum_eta_bias_ok,
        eta0_scale_to_pass: scale,
    })
}

/// One row of a run trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunRecord {
    pub run: usize,
    pub iteration: usize,
    pub cost: f64,
    pub gap: f64,
    pub grad_est_norm: f64,
    pub in_level_set: bool,
    pub step_radius_ok: bool,
    pub destabilized: bool,
    pub samples_consumed: u64,
}

/// End-of-run summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub run: usize,
    pub initial_cost: f64,
    /// Cost of the last stabilizing iterate.
    pub final_cost: f64,
    pub final_gap: f64,
    pub min_cost: f64,
    /// First iteration whose update destabilized the closed loop.
    pub diverged_at: Option<usize>,
    pub iterations: usize,
    /// Updates skipped because the oracle could not produce a gradient.
    pub skipped_updates: usize,
    pub samples_consumed: u64,
}

impl RunSummary {
    /// Final gap, or `+∞` for a run that destabilized.
    pub fn terminal_gap(&self) -> f64 {
        if self.diverged_at.is_some() {
            f64::INFINITY
        } else {
            self.final_gap
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<RunRecord>,
    pub summary: RunSummary,
}

/// Results of a Monte Carlo batch.
#[derive(Debug, Clone)]
pub struct RunSet {
    pub c_star: f64,
    pub initial_cost: f64,
    pub j0: f64,
    pub radius: f64,
    pub runs: Vec<RunOutput>,
}

impl RunSet {
    pub fn records(&self) -> impl Iterator<Item = &RunRecord> {
        self.runs.iter().flat_map(|r| r.records.iter())
    }

    pub fn summaries(&self) -> Vec<RunSummary> {
        self.runs.iter().map(|r| r.summary.clone()).collect()
    }

    pub fn diverged_fraction(&self) -> f64 {
        let n = self.runs.len().max(1) as f64;
        self.runs.iter().filter(|r| r.summary.diverged_at.is_some()).count() as f64 / n
    }

    /// Median of [`RunSummary::terminal_gap`].
    pub fn median_terminal_gap(&self) -> f64 {
        median(self.runs.iter().map(|r| r.summary.terminal_gap()).collect())
    }
}

pub fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Settings shared by every driver.
#[derive(Debug, Clone, Copy)]
pub struct RunConfig {
    pub schedule: StepSchedule,
    pub runs: usize,
    pub iters: usize,
    pub master_seed: u64,
    /// Keep every `record_every`-th iteration (plus the first and last).
    pub record_every: usize,
    /// Level `J0`; defaults to `2 C(K0)`.
    pub j0: Option<f64>,
}

/// What an oracle returned at one iteration.
enum Step {
    Gradient { g: Matrix, samples: u64 },
    /// No usable gradient; keep `K`.
    Skip { samples: u64 },
}

struct Context {
    c_star: f64,
    initial_cost: f64,
    j0: f64,
    radius: f64,
}

fn context(sys: &LinearSystem, cost: &LqrCost, k0: &Gain, cfg: &RunConfig) -> Result<(Context, Evaluation)> {
    cfg.schedule.validate()?;
    if cfg.runs == 0 || cfg.iters == 0 || cfg.record_every == 0 {
        return Err(Error::InvalidArgument(
            "runs, iters and record_every must be positive".into(),
        ));
    }
    let ev0 = evaluate(sys, cost, k0)?;
    let bounds = LevelBounds::new(sys, cost)?;
    let j0 = cfg.j0.unwrap_or(2.0 * ev0.cost);
    if !(j0 > bounds.c_star) {
        return Err(Error::InvalidLevel {
            j0,
            c_star: bounds.c_star,
        });
    }
    Ok((
        Context {
            c_star: bounds.c_star,
            initial_cost: ev0.cost,
            j0,
            radius: bounds.radius(j0),
        },
        ev0,
    ))
}

fn drive<F>(
    run: usize,
    sys: &LinearSystem,
    cost: &LqrCost,
    k0: &Gain,
    ev0: &Evaluation,
    ctx: &Context,
    cfg: &RunConfig,
    mut oracle: F,
) -> RunOutput
where
    F: FnMut(usize, &Gain, &Evaluation) -> Step,
{
    let mut k = k0.clone();
    let mut ev = ev0.clone();
    let mut samples: u64 = 0;
    let mut skipped = 0;
    let mut min_cost = ev.cost;
    let mut diverged_at = None;
    let mut records = Vec::with_capacity(cfg.iters / cfg.record_every + 2);
    let record = |i: usize, ev: &Evaluation, g: f64, step_ok: bool, destab: bool, samples: u64| RunRecord {
        run,
        iteration: i,
        cost: if destab { f64::INFINITY } else { ev.cost },
        gap: if destab { f64::INFINITY } else { ev.cost - ctx.c_star },
        grad_est_norm: g,
        in_level_set: !destab && ev.cost <= ctx.j0,
        step_radius_ok: step_ok,
        destabilized: destab,
        samples_consumed: samples,
    };
    records.push(record(0, &ev, 0.0, true, false, 0));
    let mut last = 0;
    for i in 1..=cfg.iters {
        let (g, used) = match oracle(i, &k, &ev) {
            Step::Gradient { g, samples } => (Some(g), samples),
            Step::Skip { samples } => (None, samples),
        };
        samples += used;
        last = i;
        let Some(g) = g else {
            skipped += 1;
            if i % cfg.record_every == 0 || i == cfg.iters {
                records.push(record(i, &ev, 0.0, true, false, samples));
            }
            continue;
        };
        let eta = cfg.schedule.step(i);
        let k_next = pg_update(&k, &g, eta);
        let step_ok = (&k_next - &k).norm() <= ctx.radius;
        let g_norm = g.norm();
        match evaluate(sys, cost, &k_next) {
            Ok(next) => {
                k = k_next;
                ev = next;
                min_cost = min_cost.min(ev.cost);
                if i % cfg.record_every == 0 || i == cfg.iters {
                    records.push(record(i, &ev, g_norm, step_ok, false, samples));
                }
            }
            Err(_) => {
                diverged_at = Some(i);
                records.push(record(i, &ev, g_norm, step_ok, true, samples));
                break;
            }
        }
    }
    RunOutput {
        records,
        summary: RunSummary {
            run,
            initial_cost: ctx.initial_cost,
            final_cost: ev.cost,
            final_gap: ev.cost - ctx.c_star,
            min_cost,
            diverged_at,
            iterations: last,
            skipped_updates: skipped,
            samples_consumed: samples,
        },
    }
}

fn finish(ctx: Context, runs: Vec<RunOutput>) -> RunSet {
    RunSet {
        c_star: ctx.c_star,
        initial_cost: ctx.initial_cost,
        j0: ctx.j0,
        radius: ctx.radius,
        runs,
    }
}

/// Bias added to the exact gradient in the synthetic experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasSpec {
    /// Norm of the mean perturbation at `i = 1`.
    pub magnitude: f64,
    /// Mean norm decays as `magnitude · i^{−1/2}` when set.
    pub vanishing: bool,
    /// Variance of the i.i.d. entries added on top of the mean.
    pub entry_variance: f64,
}

impl BiasSpec {
    pub fn mean_norm(&self, i: usize) -> f64 {
        if self.vanishing {
            self.magnitude / (i as f64).sqrt()
        } else {
            self.magnitude
        }
    }
}

/// SGD with `ĝ_i = ∇C(K_i) + Δ_i`, where `Δ_i` is a fixed per-run random
/// direction scaled to the configured mean norm plus i.i.d. Gaussian entries.
pub fn run_synthetic_biased(
    sys: &LinearSystem,
    cost: &LqrCost,
    k0: &Gain,
    bias: &BiasSpec,
    cfg: &RunConfig,
) -> Result<RunSet> {
    let (ctx, ev0) = context(sys, cost, k0, cfg)?;
    let sd = bias.entry_variance.max(0.0).sqrt();
    let runs = (0..cfg.runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = RngStream::new(cfg.master_seed, run as u64);
            let (m, n) = (k0.nrows(), k0.ncols());
            let mut dir = Matrix::from_fn(m, n, |_, _| rng.normal());
            let norm = dir.norm();
            dir /= norm;
            drive(run, sys, cost, k0, &ev0, &ctx, cfg, |i, _k, ev| {
                let noise = Matrix::from_fn(m, n, |_, _| sd * rng.normal());
                Step::Gradient {
                    g: &ev.gradient + &dir * bias.mean_norm(i) + noise,
                    samples: 0,
                }
            })
        })
        .collect();
    Ok(finish(ctx, runs))
}

/// SGD with the exact gradient (reference runs and sanity checks).
pub fn run_exact(sys: &LinearSystem, cost: &LqrCost, k0: &Gain, cfg: &RunConfig) -> Result<RunSet> {
    let (ctx, ev0) = context(sys, cost, k0, cfg)?;
    let runs = (0..cfg.runs)
        .into_par_iter()
        .map(|run| {
            drive(run, sys, cost, k0, &ev0, &ctx, cfg, |_, _, ev| Step::Gradient {
                g: ev.gradient.clone(),
                samples: 0,
            })
        })
        .collect();
    Ok(finish(ctx, runs))
}

/// Indirect-method settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndirectSettings {
    /// Length of the initial data batch.
    pub t0: usize,
    /// Excite with the fixed `K0` instead of the current iterate.
    pub off_policy: bool,
}

/// Collects `t0` dithered transitions under `k0` and initialises RLS.
pub fn collect_initial_batch(
    sys: &LinearSystem,
    k0: &Gain,
    t0: usize,
    rng: &mut RngStream,
) -> Result<(Plant, crate::ident::RlsState)> {
    let mut plant = Plant::new(sys, rng)?;
    let mut ds: Vec<Vector> = Vec::with_capacity(t0);
    let mut xs: Vec<Vector> = Vec::with_capacity(t0);
    for _ in 0..t0 {
        let tr = plant.step(k0, rng);
        ds.push(tr.d);
        xs.push(tr.x_next);
    }
    let state = batch_init(&ds, &xs)?;
    Ok((plant, state))
}

/// Indirect data-driven policy gradient: one dithered transition per
/// iteration, RLS update, gradient of the identified model. When the
/// identified closed loop is unstable the update is skipped.
pub fn run_indirect_pg(
    sys: &LinearSystem,
    cost: &LqrCost,
    k0: &Gain,
    settings: &IndirectSettings,
    cfg: &RunConfig,
) -> Result<RunSet> {
    if settings.t0 < sys.n_x() + sys.n_u() {
        return Err(Error::InsufficientExcitation(format!(
            "t0 = {} is below n_x + n_u = {}",
            settings.t0,
            sys.n_x() + sys.n_u()
        )));
    }
    let (ctx, ev0) = context(sys, cost, k0, cfg)?;
    let runs: Result<Vec<RunOutput>> = (0..cfg.runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = RngStream::new(cfg.master_seed, run as u64);
            let (mut plant, mut state) = collect_initial_batch(sys, k0, settings.t0, &mut rng)?;
            let mut out = drive(run, sys, cost, k0, &ev0, &ctx, cfg, |_, k, _| {
                let excite = if settings.off_policy { k0 } else { k };
                let tr = plant.step(excite, &mut rng);
                if rls_update(&mut state, &tr.d, &tr.x_next).is_err() {
                    return Step::Skip { samples: 1 };
                }
                match lqr::model_gradient(&state.a_hat(), &state.b_hat(), cost, &sys.sigma_w, k) {
                    Ok(g) => Step::Gradient { g, samples: 1 },
                    Err(_) => Step::Skip { samples: 1 },
                }
            });
            for r in &mut out.records {
                r.samples_consumed += settings.t0 as u64;
            }
            out.summary.samples_consumed += settings.t0 as u64;
            Ok(out)
        })
        .collect();
    Ok(finish(ctx, runs?))
}

/// How the direct runs evaluate perturbed gains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostEvaluation {
    /// Empirical cost of a simulated rollout.
    Rollout,
    /// Exact `C(K + U)` (noise-free reference).
    Exact,
}

/// Direct (zeroth-order) data-driven policy gradient.
pub fn run_direct_pg(
    sys: &LinearSystem,
    cost: &LqrCost,
    k0: &Gain,
    params: &DirectParams,
    evaluation: CostEvaluation,
    cfg: &RunConfig,
) -> Result<RunSet> {
    let (ctx, ev0) = context(sys, cost, k0, cfg)?;
    let template = DirectEstimator::new(sys, cost)?;
    let runs = (0..cfg.runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = RngStream::new(cfg.master_seed, run as u64);
            let mut estimator = template.clone();
            drive(run, sys, cost, k0, &ev0, &ctx, cfg, |i, k, _| {
                let p = params.at(i);
                let used = (p.n * p.ell) as u64;
                let result = match evaluation {
                    CostEvaluation::Rollout => estimator.estimate(k, &p, &mut rng).map(|s| s.gradient),
                    CostEvaluation::Exact => zeroth_order_estimate(k, &p, &mut rng, |kk, _| {
                        lqr::evaluate(sys, cost, kk).ok().map(|e| e.cost)
                    })
                    .map(|(g, _)| g),
                };
                match result {
                    Ok(g) => Step::Gradient { g, samples: used },
                    Err(_) => Step::Skip { samples: used },
                }
            })
        })
        .collect();
    Ok(finish(ctx, runs))
}
