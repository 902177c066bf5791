//! Experiment configuration: JSON loading, exhaustive validation and preset
//! materialisation.

use std::path::Path;

use lqrpg_core::lqr::{self, LinearSystem, LqrCost};
use lqrpg_core::presets::{self, Problem};
use lqrpg_core::sgd::{BiasSequence, BiasSpec, Deltas, DirectParamSchedule, DirectParams, StepSchedule};
use lqrpg_core::zeroth::ZeroOrderParams;
use lqrpg_core::{Matrix, SymmetricPsdMatrix};
use serde::{Deserialize, Serialize};

use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Scalar,
    Benchmark3,
    Boeing747,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    OracleIndirect,
    OracleDirect,
    SgdSynthetic,
    PgIndirect,
    PgDirect,
    Constants,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::OracleIndirect,
        Experiment::OracleDirect,
        Experiment::SgdSynthetic,
        Experiment::PgIndirect,
        Experiment::PgDirect,
        Experiment::Constants,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::OracleIndirect => "oracle-indirect",
            Experiment::OracleDirect => "oracle-direct",
            Experiment::SgdSynthetic => "sgd-synthetic",
            Experiment::PgIndirect => "pg-indirect",
            Experiment::PgDirect => "pg-direct",
            Experiment::Constants => "constants",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.as_str() == s)
    }

    fn default_runs(self) -> usize {
        match self {
            Experiment::OracleIndirect | Experiment::OracleDirect => 500,
            Experiment::SgdSynthetic => 100,
            Experiment::PgIndirect => 10,
            Experiment::PgDirect => 3,
            Experiment::Constants => 1,
        }
    }

    fn default_iters(self) -> usize {
        match self {
            Experiment::SgdSynthetic | Experiment::PgIndirect => 100_000,
            Experiment::PgDirect => 20_000,
            Experiment::OracleIndirect => 10_000,
            Experiment::OracleDirect | Experiment::Constants => 1,
        }
    }
}

/// Matrices of a problem, row-major nested arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    pub sigma_w: Vec<Vec<f64>>,
    #[serde(default)]
    pub sigma_0: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub sigma_e: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub k0: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evaluation {
    Rollout,
    Exact,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OracleIndirectRaw {
    noise_levels: Option<Vec<f64>>,
    t0: Option<i64>,
    checkpoints: Option<Vec<i64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OracleDirectRaw {
    v: Option<Vec<f64>>,
    n: Option<Vec<i64>>,
    ell: Option<i64>,
    evaluation: Option<Evaluation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticArm {
    pub label: String,
    pub schedule: StepSchedule,
    pub bias: BiasSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndirectArm {
    pub label: String,
    pub schedule: StepSchedule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectArm {
    pub label: String,
    pub schedule: StepSchedule,
    pub params: DirectParams,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SgdSyntheticRaw {
    arms: Option<Vec<SyntheticArm>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PgIndirectRaw {
    t0: Option<i64>,
    off_policy: Option<bool>,
    arms: Option<Vec<IndirectArm>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PgDirectRaw {
    evaluation: Option<Evaluation>,
    arms: Option<Vec<DirectArm>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstantsRaw {
    deltas: Option<Deltas>,
    bias: Option<BiasSequence>,
    horizon: Option<i64>,
    second_moment: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    preset: Preset,
    #[serde(default)]
    experiment: Option<Experiment>,
    #[serde(default)]
    master_seed: Option<u64>,
    #[serde(default)]
    runs: Option<i64>,
    #[serde(default)]
    iters: Option<i64>,
    #[serde(default)]
    record_every: Option<i64>,
    #[serde(default)]
    j0: Option<f64>,
    #[serde(default)]
    sigma_w: Option<f64>,
    #[serde(default)]
    schedule: Option<StepSchedule>,
    #[serde(default)]
    output_path: Option<String>,
    #[serde(default)]
    system: Option<SystemSpec>,
    #[serde(default)]
    oracle_indirect: Option<OracleIndirectRaw>,
    #[serde(default)]
    oracle_direct: Option<OracleDirectRaw>,
    #[serde(default)]
    sgd_synthetic: Option<SgdSyntheticRaw>,
    #[serde(default)]
    pg_indirect: Option<PgIndirectRaw>,
    #[serde(default)]
    pg_direct: Option<PgDirectRaw>,
    #[serde(default)]
    constants: Option<ConstantsRaw>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub experiment: Option<Experiment>,
    pub seed: Option<u64>,
    pub runs: Option<i64>,
    pub iters: Option<i64>,
    pub out: Option<String>,
}

/// Experiment-specific settings with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Settings {
    OracleIndirect {
        noise_levels: Vec<f64>,
        t0: usize,
        checkpoints: Vec<usize>,
    },
    OracleDirect {
        v: Vec<f64>,
        n: Vec<usize>,
        ell: usize,
        evaluation: Evaluation,
    },
    SgdSynthetic {
        arms: Vec<SyntheticArm>,
    },
    PgIndirect {
        t0: usize,
        off_policy: bool,
        arms: Vec<IndirectArm>,
    },
    PgDirect {
        evaluation: Evaluation,
        arms: Vec<DirectArm>,
    },
    Constants {
        deltas: Deltas,
        bias: BiasSequence,
        horizon: usize,
        second_moment: Option<f64>,
        schedule: Option<StepSchedule>,
    },
}

/// A fully validated configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub experiment: Experiment,
    pub master_seed: u64,
    pub runs: usize,
    pub iters: usize,
    pub record_every: usize,
    pub j0: Option<f64>,
    pub output_path: String,
    pub system: SystemSpec,
    pub settings: Settings,
}

impl ExperimentConfig {
    /// Rebuilds the problem from the materialised matrices.
    pub fn problem(&self) -> Result<Problem, HarnessError> {
        build_problem(self.preset, &self.system).map_err(|e| HarnessError::Config(vec![format!("system: {e}")]))
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    load_config_with(path, &Overrides::default())
}

pub fn load_config_with(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig, HarnessError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Config(vec![format!("config: cannot read {}: {e}", path.display())]))?;
    parse_config(&text, overrides)
}

pub fn parse_config(text: &str, overrides: &Overrides) -> Result<ExperimentConfig, HarnessError> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|e| {
        HarnessError::Config(vec![format!(
            "parse error at line {} column {}: {}",
            e.line(),
            e.column(),
            e
        )])
    })?;
    resolve(raw, overrides)
}

fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn from_rows(name: &str, rows: &[Vec<f64>]) -> Result<Matrix, String> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 {
        return Err(format!("{name}: matrix is empty"));
    }
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(format!("{name}: rows have unequal lengths"));
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(format!("{name}: entries must be finite"));
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn psd(name: &str, rows: &[Vec<f64>]) -> Result<SymmetricPsdMatrix, String> {
    SymmetricPsdMatrix::new(from_rows(name, rows)?).map_err(|e| format!("{name}: {e}"))
}

fn build_problem(preset: Preset, spec: &SystemSpec) -> Result<Problem, String> {
    let a = from_rows("a", &spec.a)?;
    let b = from_rows("b", &spec.b)?;
    let q = from_rows("q", &spec.q)?;
    let r = from_rows("r", &spec.r)?;
    let sigma_w = psd("sigma_w", &spec.sigma_w)?;
    let sigma_0 = match &spec.sigma_0 {
        Some(rows) => psd("sigma_0", rows)?,
        None => sigma_w.clone(),
    };
    let sigma_e = match &spec.sigma_e {
        Some(rows) => psd("sigma_e", rows)?,
        None => SymmetricPsdMatrix::identity(b.ncols()),
    };
    let sys = LinearSystem::new(a, b, sigma_w, sigma_0, sigma_e).map_err(|e| e.to_string())?;
    let cost = LqrCost::new(q, r).map_err(|e| e.to_string())?;
    let k0 = match &spec.k0 {
        Some(rows) => from_rows("k0", rows)?,
        None => Matrix::zeros(sys.n_u(), sys.n_x()),
    };
    if k0.nrows() != sys.n_u() || k0.ncols() != sys.n_x() {
        return Err(format!(
            "k0: expected {}x{}, got {}x{}",
            sys.n_u(),
            sys.n_x(),
            k0.nrows(),
            k0.ncols()
        ));
    }
    if !lqr::is_stabilizing(&sys, &k0).map_err(|e| e.to_string())? {
        return Err(if spec.k0.is_some() {
            "k0: gain does not stabilize the system".into()
        } else {
            "k0: required because the zero gain does not stabilize the system".into()
        });
    }
    let name = match preset {
        Preset::Scalar => "scalar",
        Preset::Benchmark3 => "benchmark3",
        Preset::Boeing747 => "boeing747",
        Preset::Custom => "custom",
    };
    Ok(Problem { name, sys, cost, k0 })
}

fn spec_of(p: &Problem) -> SystemSpec {
    SystemSpec {
        a: to_rows(&p.sys.a),
        b: to_rows(&p.sys.b),
        q: to_rows(&p.cost.q),
        r: to_rows(&p.cost.r),
        sigma_w: to_rows(p.sys.sigma_w.as_matrix()),
        sigma_0: Some(to_rows(p.sys.sigma_0.as_matrix())),
        sigma_e: Some(to_rows(p.sys.sigma_e.as_matrix())),
        k0: Some(to_rows(&p.k0)),
    }
}

fn preset_problem(preset: Preset, sigma_w: Option<f64>) -> Result<Problem, String> {
    let mut p = match preset {
        Preset::Scalar => presets::scalar(),
        Preset::Benchmark3 => presets::benchmark3(sigma_w.unwrap_or(presets::BENCHMARK3_DEFAULT_SIGMA_W)),
        Preset::Boeing747 => presets::boeing747(),
        Preset::Custom => unreachable!("custom systems are read from the file"),
    }
    .map_err(|e| e.to_string())?;
    if let (Some(s), false) = (sigma_w, preset == Preset::Benchmark3) {
        let n = p.sys.n_x();
        let w = SymmetricPsdMatrix::scaled_identity(n, s).map_err(|e| e.to_string())?;
        p.sys = p.sys.with_sigma_w(w).map_err(|e| e.to_string())?;
    }
    Ok(p)
}

fn positive(errors: &mut Vec<String>, field: &str, value: Option<i64>, default: usize) -> usize {
    match value {
        None => default,
        Some(v) if v >= 1 => v as usize,
        Some(v) => {
            errors.push(format!("{field}: must be >= 1 (got {v})"));
            default
        }
    }
}

fn check_schedule(errors: &mut Vec<String>, field: &str, s: &StepSchedule) {
    if s.validate().is_err() {
        errors.push(format!("{field}: eta0, kappa and divisor must be positive and finite"));
    }
}

fn check_labels<'a>(errors: &mut Vec<String>, field: &str, labels: impl Iterator<Item = &'a str>) {
    let mut seen = std::collections::BTreeSet::new();
    for (i, l) in labels.enumerate() {
        let ok = !l.is_empty()
            && l != "summary"
            && l.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
        if !ok {
            errors.push(format!(
                "{field}[{i}].label: {l:?} must be non-empty, use [A-Za-z0-9_-] and not be \"summary\""
            ));
        }
        if !seen.insert(l.to_string()) {
            errors.push(format!("{field}[{i}].label: duplicate label {l:?}"));
        }
    }
}

pub fn default_synthetic_arms() -> Vec<SyntheticArm> {
    let constant = StepSchedule::Constant { eta0: 0.05 };
    let decaying = StepSchedule::PowerFloor {
        eta0: 0.05,
        kappa: 0.51,
        divisor: 100.0,
    };
    let bias = |vanishing| BiasSpec {
        magnitude: 0.005,
        vanishing,
        entry_variance: 1e-5,
    };
    vec![
        SyntheticArm {
            label: "constant-step-constant-bias".into(),
            schedule: constant,
            bias: bias(false),
        },
        SyntheticArm {
            label: "decaying-step-constant-bias".into(),
            schedule: decaying,
            bias: bias(false),
        },
        SyntheticArm {
            label: "constant-step-vanishing-bias".into(),
            schedule: constant,
            bias: bias(true),
        },
        SyntheticArm {
            label: "decaying-step-vanishing-bias".into(),
            schedule: decaying,
            bias: bias(true),
        },
    ]
}

pub fn default_indirect_arms() -> Vec<IndirectArm> {
    vec![
        IndirectArm {
            label: "decaying-step".into(),
            schedule: StepSchedule::PowerFloor {
                eta0: 0.05,
                kappa: 0.51,
                divisor: 100.0,
            },
        },
        IndirectArm {
            label: "constant-step".into(),
            schedule: StepSchedule::Constant { eta0: 0.05 },
        },
    ]
}

/// Fixed `(v, ℓ, n) = (0.01, 20, 300)` against the growing schedule, with the
/// schedule's time axis compressed by `DIRECT_TIME_SCALE`.
pub const DIRECT_TIME_SCALE: f64 = 0.2;

pub fn default_direct_arms() -> Vec<DirectArm> {
    let s = DIRECT_TIME_SCALE;
    let eta = 1e-3;
    vec![
        DirectArm {
            label: "fixed".into(),
            schedule: StepSchedule::Constant { eta0: eta },
            params: DirectParams::Fixed(ZeroOrderParams { v: 0.01, ell: 20, n: 300 }),
        },
        DirectArm {
            label: "adaptive".into(),
            schedule: StepSchedule::PowerFloor {
                eta0: eta,
                kappa: 0.51,
                divisor: 250.0 * s.powf(0.51),
            },
            params: DirectParams::Scheduled(DirectParamSchedule {
                v0: 0.01,
                ell0: 20,
                n0: 300,
                v_divisor: 250.0 * s.sqrt(),
                block: 40_000.0 * s,
            }),
        },
    ]
}

fn resolve(raw: RawConfig, ov: &Overrides) -> Result<ExperimentConfig, HarnessError> {
    let mut errors = Vec::new();
    let experiment = match ov.experiment.or(raw.experiment) {
        Some(e) => e,
        None => {
            errors.push("experiment: missing (set it in the file or on the command line)".into());
            Experiment::Constants
        }
    };
    let runs = positive(&mut errors, "runs", ov.runs.or(raw.runs), experiment.default_runs());
    let iters = positive(&mut errors, "iters", ov.iters.or(raw.iters), experiment.default_iters());
    let record_every = positive(&mut errors, "record_every", raw.record_every, (iters / 1000).max(1));
    let master_seed = ov.seed.or(raw.master_seed).unwrap_or(1);
    if let Some(j0) = raw.j0 {
        if !(j0.is_finite() && j0 > 0.0) {
            errors.push(format!("j0: must be positive and finite (got {j0})"));
        }
    }
    if let Some(s) = raw.sigma_w {
        if !(s.is_finite() && s > 0.0) {
            errors.push(format!("sigma_w: must be positive and finite (got {s})"));
        }
    }
    if let Some(s) = &raw.schedule {
        check_schedule(&mut errors, "schedule", s);
    }

    let problem = match (raw.preset, &raw.system) {
        (Preset::Custom, None) => {
            errors.push("system: preset \"custom\" requires explicit matrices".into());
            None
        }
        (Preset::Custom, Some(spec)) => {
            if raw.sigma_w.is_some() {
                errors.push("sigma_w: not allowed with preset \"custom\"; set system.sigma_w".into());
            }
            match build_problem(Preset::Custom, spec) {
                Ok(p) => Some(p),
                Err(e) => {
                    errors.push(format!("system.{e}"));
                    None
                }
            }
        }
        (_, Some(_)) => {
            errors.push("system: only allowed with preset \"custom\"".into());
            None
        }
        (preset, None) if raw.sigma_w.is_none_or(|s| s.is_finite() && s > 0.0) => {
            match preset_problem(preset, raw.sigma_w) {
                Ok(p) => Some(p),
                Err(e) => {
                    errors.push(format!("preset: {e}"));
                    None
                }
            }
        }
        _ => None,
    };

    let present = [
        (raw.oracle_indirect.is_some(), Experiment::OracleIndirect, "oracle_indirect"),
        (raw.oracle_direct.is_some(), Experiment::OracleDirect, "oracle_direct"),
        (raw.sgd_synthetic.is_some(), Experiment::SgdSynthetic, "sgd_synthetic"),
        (raw.pg_indirect.is_some(), Experiment::PgIndirect, "pg_indirect"),
        (raw.pg_direct.is_some(), Experiment::PgDirect, "pg_direct"),
        (raw.constants.is_some(), Experiment::Constants, "constants"),
    ];
    for (given, e, name) in present {
        if given && e != experiment {
            errors.push(format!("{name}: section does not apply to experiment {}", experiment.as_str()));
        }
    }

    let n_xu = problem.as_ref().map_or(1, |p| p.sys.n_x() + p.sys.n_u());
    let settings = match experiment {
        Experiment::OracleIndirect => {
            let s = raw.oracle_indirect.unwrap_or_default();
            let noise_levels = s.noise_levels.unwrap_or_else(|| {
                problem
                    .as_ref()
                    .map(|p| vec![p.sys.sigma_w.as_matrix()[(0, 0)]])
                    .unwrap_or_default()
            });
            if noise_levels.is_empty() {
                errors.push("oracle_indirect.noise_levels: must not be empty".into());
            }
            for (i, l) in noise_levels.iter().enumerate() {
                if !(l.is_finite() && *l > 0.0) {
                    errors.push(format!("oracle_indirect.noise_levels[{i}]: must be positive (got {l})"));
                }
            }
            let t0 = positive(&mut errors, "oracle_indirect.t0", s.t0, 2 * n_xu);
            if t0 < n_xu {
                errors.push(format!("oracle_indirect.t0: must be >= n_x + n_u = {n_xu} (got {t0})"));
            }
            let checkpoints: Vec<usize> = match s.checkpoints {
                Some(c) => c
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| positive(&mut errors, &format!("oracle_indirect.checkpoints[{i}]"), Some(v), 1))
                    .collect(),
                None => [100, 200, 500, 1000, 2000, 5000, 10_000]
                    .into_iter()
                    .filter(|&c| c <= iters.max(100))
                    .collect(),
            };
            if checkpoints.is_empty() {
                errors.push("oracle_indirect.checkpoints: must not be empty".into());
            }
            if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
                errors.push("oracle_indirect.checkpoints: must be strictly increasing".into());
            }
            if checkpoints.first().is_some_and(|&c| c < t0) {
                errors.push(format!("oracle_indirect.checkpoints: first checkpoint must be >= t0 = {t0}"));
            }
            Settings::OracleIndirect {
                noise_levels,
                t0,
                checkpoints,
            }
        }
        Experiment::OracleDirect => {
            let s = raw.oracle_direct.unwrap_or_default();
            let v = s.v.unwrap_or_else(|| vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0]);
            if v.is_empty() {
                errors.push("oracle_direct.v: must not be empty".into());
            }
            for (i, x) in v.iter().enumerate() {
                if !(x.is_finite() && *x > 0.0) {
                    errors.push(format!("oracle_direct.v[{i}]: must be positive (got {x})"));
                }
            }
            let n: Vec<usize> = s
                .n
                .unwrap_or_else(|| vec![1])
                .iter()
                .enumerate()
                .map(|(i, &x)| positive(&mut errors, &format!("oracle_direct.n[{i}]"), Some(x), 1))
                .collect();
            if n.is_empty() {
                errors.push("oracle_direct.n: must not be empty".into());
            }
            let ell = positive(&mut errors, "oracle_direct.ell", s.ell, 800);
            Settings::OracleDirect {
                v,
                n,
                ell,
                evaluation: s.evaluation.unwrap_or(Evaluation::Rollout),
            }
        }
        Experiment::SgdSynthetic => {
            let arms = raw
                .sgd_synthetic
                .and_then(|s| s.arms)
                .unwrap_or_else(default_synthetic_arms);
            if arms.is_empty() {
                errors.push("sgd_synthetic.arms: must not be empty".into());
            }
            check_labels(&mut errors, "sgd_synthetic.arms", arms.iter().map(|a| a.label.as_str()));
            for (i, a) in arms.iter().enumerate() {
                check_schedule(&mut errors, &format!("sgd_synthetic.arms[{i}].schedule"), &a.schedule);
                let b = &a.bias;
                if !(b.magnitude.is_finite() && b.magnitude >= 0.0) {
                    errors.push(format!("sgd_synthetic.arms[{i}].bias.magnitude: must be >= 0"));
                }
                if !(b.entry_variance.is_finite() && b.entry_variance >= 0.0) {
                    errors.push(format!("sgd_synthetic.arms[{i}].bias.entry_variance: must be >= 0"));
                }
            }
            Settings::SgdSynthetic { arms }
        }
        Experiment::PgIndirect => {
            let s = raw.pg_indirect.unwrap_or_default();
            let t0 = positive(&mut errors, "pg_indirect.t0", s.t0, 50);
            if t0 < n_xu {
                errors.push(format!("pg_indirect.t0: must be >= n_x + n_u = {n_xu} (got {t0})"));
            }
            let arms = s.arms.unwrap_or_else(|| match raw.schedule {
                Some(schedule) => vec![IndirectArm {
                    label: "main".into(),
                    schedule,
                }],
                None => default_indirect_arms(),
            });
            if arms.is_empty() {
                errors.push("pg_indirect.arms: must not be empty".into());
            }
            check_labels(&mut errors, "pg_indirect.arms", arms.iter().map(|a| a.label.as_str()));
            for (i, a) in arms.iter().enumerate() {
                check_schedule(&mut errors, &format!("pg_indirect.arms[{i}].schedule"), &a.schedule);
            }
            Settings::PgIndirect {
                t0,
                off_policy: s.off_policy.unwrap_or(false),
                arms,
            }
        }
        Experiment::PgDirect => {
            let s = raw.pg_direct.unwrap_or_default();
            let arms = s.arms.unwrap_or_else(default_direct_arms);
            if arms.is_empty() {
                errors.push("pg_direct.arms: must not be empty".into());
            }
            check_labels(&mut errors, "pg_direct.arms", arms.iter().map(|a| a.label.as_str()));
            for (i, a) in arms.iter().enumerate() {
                check_schedule(&mut errors, &format!("pg_direct.arms[{i}].schedule"), &a.schedule);
                let ok = match a.params {
                    DirectParams::Fixed(p) => p.v > 0.0 && p.v.is_finite() && p.ell > 0 && p.n > 0,
                    DirectParams::Scheduled(p) => {
                        p.v0 > 0.0 && p.v0.is_finite() && p.ell0 > 0 && p.n0 > 0 && p.v_divisor > 0.0 && p.block > 0.0
                    }
                };
                if !ok {
                    errors.push(format!("pg_direct.arms[{i}].params: all parameters must be positive"));
                }
            }
            Settings::PgDirect {
                evaluation: s.evaluation.unwrap_or(Evaluation::Rollout),
                arms,
            }
        }
        Experiment::Constants => {
            let s = raw.constants.unwrap_or_default();
            let deltas = s.deltas.unwrap_or_default();
            if !(deltas.d1 > 0.0 && deltas.d2 > 0.0 && deltas.d3 > 0.0 && deltas.d1 + deltas.d2 < 1.0 && deltas.d3 < 1.0) {
                errors.push("constants.deltas: need d1, d2, d3 > 0, d1 + d2 < 1 and d3 < 1".into());
            }
            let horizon = positive(&mut errors, "constants.horizon", s.horizon, 1_000_000);
            if let Some(c) = s.second_moment {
                if !(c.is_finite() && c > 0.0) {
                    errors.push(format!("constants.second_moment: must be positive (got {c})"));
                }
            }
            if let Some(StepSchedule::PowerFloor { kappa, .. }) = raw.schedule {
                if !(kappa > 0.5 && kappa < 1.0) {
                    errors.push(format!("schedule.kappa: must lie in (1/2, 1) for validation (got {kappa})"));
                }
            }
            Settings::Constants {
                deltas,
                bias: s.bias.unwrap_or(BiasSequence::Zero),
                horizon,
                second_moment: s.second_moment,
                schedule: raw.schedule,
            }
        }
    };

    if let (Some(p), Some(j0)) = (&problem, raw.j0) {
        if let Ok(c) = lqr::cost(&p.sys, &p.cost, &p.k0) {
            if j0 < c {
                errors.push(format!("j0: must be >= C(K0) = {c} (got {j0})"));
            }
        }
    }

    if !errors.is_empty() {
        return Err(HarnessError::Config(errors));
    }
    let problem = problem.expect("problem is set when there are no errors");
    Ok(ExperimentConfig {
        preset: raw.preset,
        experiment,
        master_seed,
        runs,
        iters,
        record_every,
        j0: raw.j0,
        output_path: ov
            .out
            .clone()
            .or(raw.output_path)
            .unwrap_or_else(|| format!("out/{}", experiment.as_str())),
        system: spec_of(&problem),
        settings,
    })
}
