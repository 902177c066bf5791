//! Experiment drivers: each turns a validated configuration into tables.

use lqrpg_core::ident::indirect_oracle;
use lqrpg_core::lqr::{self, level_constants, LinearSystem, LqrCost};
use lqrpg_core::presets::Problem;
use lqrpg_core::sgd::{
    self, collect_initial_batch, run_direct_pg, run_indirect_pg, run_synthetic_biased, validate_schedule,
    CostEvaluation, IndirectSettings, RunConfig, RunSet, StepSchedule, ValidationInputs,
};
use lqrpg_core::sim::RngStream;
use lqrpg_core::zeroth::{zeroth_order_estimate, DirectEstimator, ZeroOrderParams};
use lqrpg_core::{Error, Gain, Matrix, SymmetricPsdMatrix};
use rayon::prelude::*;

use crate::config::{Evaluation, ExperimentConfig, Settings};
use crate::output::{Cell, Table};

/// Tables produced by one experiment, plus human-readable summary lines.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub tables: Vec<Table>,
    pub notes: Vec<String>,
}

impl ExperimentOutput {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

pub fn run(config: &ExperimentConfig) -> Result<ExperimentOutput, Error> {
    let problem = config
        .problem()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    match &config.settings {
        Settings::OracleIndirect {
            noise_levels,
            t0,
            checkpoints,
        } => oracle_indirect(config, &problem, noise_levels, *t0, checkpoints),
        Settings::OracleDirect { v, n, ell, evaluation } => oracle_direct(config, &problem, v, n, *ell, *evaluation),
        Settings::SgdSynthetic { arms } => {
            let sets = arms
                .iter()
                .map(|arm| {
                    let rc = run_config(config, arm.schedule);
                    run_synthetic_biased(&problem.sys, &problem.cost, &problem.k0, &arm.bias, &rc)
                        .map(|s| (arm.label.clone(), s))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(run_tables(sets))
        }
        Settings::PgIndirect { t0, off_policy, arms } => {
            let settings = IndirectSettings {
                t0: *t0,
                off_policy: *off_policy,
            };
            let sets = arms
                .iter()
                .map(|arm| {
                    let rc = run_config(config, arm.schedule);
                    run_indirect_pg(&problem.sys, &problem.cost, &problem.k0, &settings, &rc).map(|s| (arm.label.clone(), s))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(run_tables(sets))
        }
        Settings::PgDirect { evaluation, arms } => {
            let eval = match evaluation {
                Evaluation::Rollout => CostEvaluation::Rollout,
                Evaluation::Exact => CostEvaluation::Exact,
            };
            let sets = arms
                .iter()
                .map(|arm| {
                    let rc = run_config(config, arm.schedule);
                    run_direct_pg(&problem.sys, &problem.cost, &problem.k0, &arm.params, eval, &rc)
                        .map(|s| (arm.label.clone(), s))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(run_tables(sets))
        }
        Settings::Constants {
            deltas,
            bias,
            horizon,
            second_moment,
            schedule,
        } => {
            let c0 = lqr::cost(&problem.sys, &problem.cost, &problem.k0)?;
            let j0 = config.j0.unwrap_or(2.0 * c0);
            let k = level_constants(&problem.sys, &problem.cost, j0)?;
            let mut t = Table::new(
                "constants",
                &[
                    "j0",
                    "cost_k0",
                    "c_star",
                    "norm_k_star",
                    "mu",
                    "smoothness",
                    "radius",
                    "b_grad",
                    "b_k",
                    "h",
                    "h_sigma",
                    "h_cost",
                    "h_grad",
                    "alpha1",
                    "alpha2",
                    "eps_prime",
                    "p_theta_prime",
                    "p_level",
                    "c_d",
                ],
            );
            t.push(vec![
                j0.into(),
                c0.into(),
                k.c_star.into(),
                k.norm_k_star.into(),
                k.mu.into(),
                k.smoothness.into(),
                k.radius.into(),
                k.b_grad.into(),
                k.b_k.into(),
                k.h.into(),
                k.h_sigma.into(),
                k.h_cost.into(),
                k.h_grad.into(),
                k.alpha1.into(),
                k.alpha2.into(),
                k.eps_prime.into(),
                k.p_theta_prime.into(),
                k.p_level.into(),
                k.c_d.into(),
            ]);
            let mut out = ExperimentOutput {
                tables: vec![t],
                notes: vec![format!("mu = {:.6e}, L(J0) = {:.6e}, r(J0) = {:.6e}", k.mu, k.smoothness, k.radius)],
            };
            if let Some(schedule) = schedule {
                let c = second_moment.unwrap_or(k.b_grad * k.b_grad);
                let r = validate_schedule(
                    &k,
                    schedule,
                    bias,
                    &ValidationInputs {
                        cost_k0: c0,
                        second_moment: c,
                        deltas: *deltas,
                        horizon: *horizon,
                        indirect_second_moment: None,
                    },
                )?;
                let mut t = Table::new(
                    "schedule_report",
                    &[
                        "second_moment",
                        "epsilon_prime",
                        "epsilon",
                        "mu",
                        "eta_max",
                        "step_below_mu",
                        "sum_eta_sq",
                        "sum_eta_bias",
                        "threshold_descent",
                        "threshold_radius",
                        "threshold_bias",
                        "sum_eta_sq_ok",
                        "sum_eta_bias_ok",
                        "passes",
                        "eta0_scale_to_pass",
                    ],
                );
                t.push(vec![
                    c.into(),
                    r.epsilon_prime.into(),
                    r.epsilon.into(),
                    r.mu.into(),
                    r.eta_max.into(),
                    r.step_below_mu.into(),
                    r.sum_eta_sq.into(),
                    r.sum_eta_bias.into(),
                    r.threshold_descent.into(),
                    r.threshold_radius.into(),
                    r.threshold_bias.into(),
                    r.sum_eta_sq_ok.into(),
                    r.sum_eta_bias_ok.into(),
                    r.passes.into(),
                    r.eta0_scale_to_pass.into(),
                ]);
                out.notes.push(format!(
                    "schedule {}; eta0 may be scaled by {:.3e}",
                    if r.passes { "passes" } else { "fails" },
                    r.eta0_scale_to_pass
                ));
                out.tables.push(t);
            }
            Ok(out)
        }
    }
}

fn run_config(config: &ExperimentConfig, schedule: StepSchedule) -> RunConfig {
    RunConfig {
        schedule,
        runs: config.runs,
        iters: config.iters,
        master_seed: config.master_seed,
        record_every: config.record_every,
        j0: config.j0,
    }
}

fn run_tables(sets: Vec<(String, RunSet)>) -> ExperimentOutput {
    let mut summary = Table::new(
        "summary",
        &[
            "series",
            "run",
            "initial_cost",
            "final_cost",
            "final_gap",
            "min_cost",
            "diverged_at",
            "iterations",
            "skipped_updates",
            "samples_consumed",
            "c_star",
        ],
    );
    let mut tables = Vec::new();
    let mut notes = Vec::new();
    for (label, set) in sets {
        let records: Vec<_> = set.records().copied().collect();
        tables.push(Table::from_rows(label.clone(), &records));
        for s in set.summaries() {
            summary.push(vec![
                label.as_str().into(),
                s.run.into(),
                s.initial_cost.into(),
                s.final_cost.into(),
                s.final_gap.into(),
                s.min_cost.into(),
                s.diverged_at.into(),
                s.iterations.into(),
                s.skipped_updates.into(),
                s.samples_consumed.into(),
                set.c_star.into(),
            ]);
        }
        let init = set.initial_cost - set.c_star;
        notes.push(format!(
            "{label}: diverged {:.0}% of runs, median terminal gap / initial gap = {:.3e}",
            100.0 * set.diverged_fraction(),
            set.median_terminal_gap() / init
        ));
    }
    tables.push(summary);
    ExperimentOutput { tables, notes }
}

/// Mean, `‖mean − truth‖_F` and the sample variance `E‖g − mean‖²_F`.
fn moments(samples: &[Matrix], truth: &Matrix) -> (Matrix, f64, f64) {
    let m = samples.len();
    if m == 0 {
        return (truth * f64::NAN, f64::NAN, f64::NAN);
    }
    let mean = samples.iter().fold(Matrix::zeros(truth.nrows(), truth.ncols()), |acc, g| acc + g) / m as f64;
    let var = if m > 1 {
        samples.iter().map(|g| (g - &mean).norm_squared()).sum::<f64>() / (m - 1) as f64
    } else {
        f64::NAN
    };
    let bias = (&mean - truth).norm();
    (mean, bias, var)
}

/// Monte Carlo bias and variance of the indirect gradient estimate at the
/// fixed gain `K0` as the identification data grow.
fn oracle_indirect(
    config: &ExperimentConfig,
    problem: &Problem,
    noise_levels: &[f64],
    t0: usize,
    checkpoints: &[usize],
) -> Result<ExperimentOutput, Error> {
    let mut table = Table::new(
        "oracle_indirect",
        &[
            "noise_level",
            "iteration",
            "bias_norm",
            "variance",
            "median_dtheta",
            "mean_dtheta",
            "exact_grad_norm",
            "streams",
            "failures",
        ],
    );
    let n_x = problem.sys.n_x();
    for (li, &level) in noise_levels.iter().enumerate() {
        let sys = problem.sys.with_sigma_w(SymmetricPsdMatrix::scaled_identity(n_x, level)?)?;
        let truth = lqr::exact_gradient(&sys, &problem.cost, &problem.k0)?;
        let streams: Vec<Vec<(Option<Matrix>, f64)>> = (0..config.runs)
            .into_par_iter()
            .map(|r| indirect_stream(&sys, &problem.cost, &problem.k0, t0, checkpoints, config.master_seed, r, li))
            .collect::<Result<_, Error>>()?;
        for (ci, &n) in checkpoints.iter().enumerate() {
            let grads: Vec<Matrix> = streams.iter().filter_map(|s| s[ci].0.clone()).collect();
            let dthetas: Vec<f64> = streams.iter().map(|s| s[ci].1).collect();
            let (_, bias, var) = moments(&grads, &truth);
            table.push(vec![
                level.into(),
                n.into(),
                bias.into(),
                var.into(),
                sgd::median(dthetas.clone()).into(),
                (dthetas.iter().sum::<f64>() / dthetas.len() as f64).into(),
                truth.norm().into(),
                config.runs.into(),
                (streams.len() - grads.len()).into(),
            ]);
        }
    }
    Ok(ExperimentOutput {
        tables: vec![table],
        notes: vec![format!("{} streams per noise level", config.runs)],
    })
}

#[allow(clippy::too_many_arguments)]
fn indirect_stream(
    sys: &LinearSystem,
    cost: &LqrCost,
    k: &Gain,
    t0: usize,
    checkpoints: &[usize],
    seed: u64,
    run: usize,
    level: usize,
) -> Result<Vec<(Option<Matrix>, f64)>, Error> {
    let mut rng = RngStream::new(seed, run as u64).child(level as u64);
    let (mut plant, mut state) = collect_initial_batch(sys, k, t0, &mut rng)?;
    let mut out = Vec::with_capacity(checkpoints.len());
    for &n in checkpoints {
        while state.sample_count() < n {
            let tr = plant.step(k, &mut rng);
            lqrpg_core::ident::rls_update(&mut state, &tr.d, &tr.x_next)?;
        }
        let g = match indirect_oracle(&state, sys, cost, k) {
            Ok(s) => Some(s.gradient),
            Err(Error::ModelUnstable { .. }) => None,
            Err(e) => return Err(e),
        };
        out.push((g, state.error_norm(sys)));
    }
    Ok(out)
}

/// Monte Carlo bias, variance and standard error of the zeroth-order
/// estimate at `K0` over a grid of `(v, n)`.
fn oracle_direct(
    config: &ExperimentConfig,
    problem: &Problem,
    vs: &[f64],
    ns: &[usize],
    ell: usize,
    evaluation: Evaluation,
) -> Result<ExperimentOutput, Error> {
    let mut table = Table::new(
        "oracle_direct",
        &[
            "evaluation",
            "v",
            "ell",
            "n",
            "reps",
            "bias_norm",
            "variance",
            "std_error",
            "dropped_rollouts",
            "failures",
            "exact_grad_norm",
        ],
    );
    let (sys, cost, k) = (&problem.sys, &problem.cost, &problem.k0);
    let truth = lqr::exact_gradient(sys, cost, k)?;
    let template = DirectEstimator::new(sys, cost)?;
    let mut cell = 0u64;
    for &v in vs {
        for &n in ns {
            let params = ZeroOrderParams::new(v, ell, n)?;
            let label = cell;
            cell += 1;
            let reps: Vec<Option<(Matrix, usize)>> = (0..config.runs)
                .into_par_iter()
                .map_init(
                    || template.clone(),
                    |est, r| {
                        let mut rng = RngStream::new(config.master_seed, r as u64).child(label);
                        let res = match evaluation {
                            Evaluation::Rollout => est.estimate(k, &params, &mut rng).map(|s| (s.gradient, s.diverged_rollouts)),
                            Evaluation::Exact => {
                                zeroth_order_estimate(k, &params, &mut rng, |kk, _| lqr::cost(sys, cost, kk).ok())
                            }
                        };
                        match res {
                            Ok(x) => Ok(Some(x)),
                            Err(Error::EstimationFailure(_)) => Ok(None),
                            Err(e) => Err(e),
                        }
                    },
                )
                .collect::<Result<_, Error>>()?;
            let grads: Vec<Matrix> = reps.iter().flatten().map(|(g, _)| g.clone()).collect();
            let failures = reps.len() - grads.len();
            let dropped: usize = reps.iter().flatten().map(|(_, d)| d).sum::<usize>() + failures * n;
            let (_, bias, var) = moments(&grads, &truth);
            table.push(vec![
                Cell::Text(
                    match evaluation {
                        Evaluation::Rollout => "rollout",
                        Evaluation::Exact => "exact",
                    }
                    .into(),
                ),
                v.into(),
                ell.into(),
                n.into(),
                config.runs.into(),
                bias.into(),
                var.into(),
                var.sqrt().into(),
                dropped.into(),
                failures.into(),
                truth.norm().into(),
            ]);
        }
    }
    Ok(ExperimentOutput {
        tables: vec![table],
        notes: vec![format!("{} repetitions per (v, n)", config.runs)],
    })
}
