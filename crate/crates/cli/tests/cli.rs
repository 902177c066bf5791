use std::fs;
use std::path::Path;
use std::process::Command;

use lqrpg::config::Settings;
use lqrpg::output::{input_hash, write_outputs};
use lqrpg::{
    compute, format_float, parse_config, run_experiment, write_csv, Experiment, HarnessError, Overrides, Preset, Table,
};
use lqrpg_core::sgd::{RunRecord, RunSummary};

fn parse(text: &str) -> Result<lqrpg::ExperimentConfig, HarnessError> {
    parse_config(text, &Overrides::default())
}

fn config_errors(text: &str) -> Vec<String> {
    match parse(text) {
        Err(HarnessError::Config(e)) => e,
        other => panic!("expected a config error, got {other:?}"),
    }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lqrpg"))
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, text).unwrap();
    p
}

fn record(run: usize, iteration: usize) -> RunRecord {
    RunRecord {
        run,
        iteration,
        cost: 1.0 / 3.0,
        gap: 0.25,
        grad_est_norm: 2.0,
        in_level_set: true,
        step_radius_ok: false,
        destabilized: false,
        samples_consumed: 7,
    }
}

#[test]
fn minimal_scalar_config() {
    let c = parse(r#"{"preset": "scalar", "experiment": "constants"}"#).unwrap();
    assert_eq!(c.preset, Preset::Scalar);
    assert_eq!(c.experiment, Experiment::Constants);
    assert_eq!((c.runs, c.iters), (1, 1));
    assert_eq!(c.system.a, vec![vec![0.5]]);
    assert_eq!(c.system.k0, Some(vec![vec![0.0]]));
    assert!(matches!(c.settings, Settings::Constants { schedule: None, .. }));
}

#[test]
fn benchmark3_matrices() {
    let c = parse(r#"{"preset": "benchmark3", "experiment": "oracle-indirect"}"#).unwrap();
    assert_eq!(c.system.a[0][0], 1.01);
    assert_eq!(c.system.a[0][1], 0.01);
    assert_eq!(c.system.a[0][2], 0.0);
    for i in 0..3 {
        for j in 0..3 {
            let id = if i == j { 1.0 } else { 0.0 };
            assert_eq!(c.system.q[i][j], 0.001 * id);
            assert_eq!(c.system.r[i][j], id);
            assert_eq!(c.system.b[i][j], id);
            assert_eq!(c.system.sigma_0.as_ref().unwrap()[i][j], 0.1 * id);
        }
    }
}

#[test]
fn boeing_gain_is_the_reweighted_optimum() {
    let c = parse(r#"{"preset": "boeing747", "experiment": "constants"}"#).unwrap();
    assert_eq!(c.system.a.len(), 5);
    assert_eq!(c.system.b[0].len(), 4);
    let p = c.problem().unwrap();
    let weighted = lqrpg_core::lqr::LqrCost::new(p.cost.q.clone() * 40.0, p.cost.r.clone()).unwrap();
    let k = lqrpg_core::matops::solve_dare(&p.sys.a, &p.sys.b, &weighted.q, &weighted.r).unwrap().k;
    assert!((k - &p.k0).norm() < 1e-9);
}

#[test]
fn negative_runs_names_the_field() {
    let errors = config_errors(r#"{"preset": "scalar", "experiment": "sgd-synthetic", "runs": -4}"#);
    assert_eq!(errors.len(), 1);
    assert!(errors[0].starts_with("runs:"), "{errors:?}");
}

#[test]
fn every_violation_is_reported() {
    let errors = config_errors(r#"{"preset": "custom", "experiment": "pg-indirect", "runs": 0, "iters": -1, "j0": -2}"#);
    for field in ["runs:", "iters:", "j0:", "system:"] {
        assert!(errors.iter().any(|e| e.starts_with(field)), "{field} missing from {errors:?}");
    }
}

#[test]
fn parse_errors_carry_a_location() {
    let errors = config_errors("{\"preset\": \"scalar\",\n \"experimnt\": \"constants\"}");
    assert!(errors[0].contains("line 2"), "{errors:?}");
    assert!(errors[0].contains("experimnt"), "{errors:?}");
}

#[test]
fn custom_system_requires_matrices_and_a_stabilizing_gain() {
    let unstable = r#"{"preset": "custom", "experiment": "constants",
        "system": {"a": [[2.0]], "b": [[1.0]], "q": [[1.0]], "r": [[1.0]], "sigma_w": [[1.0]]}}"#;
    assert!(config_errors(unstable)[0].contains("k0"));
    let fixed = unstable.replace("\"sigma_w\": [[1.0]]", "\"sigma_w\": [[1.0]], \"k0\": [[-1.5]]");
    let c = parse(&fixed).unwrap();
    assert_eq!(c.preset, Preset::Custom);
    assert_eq!(c.system.k0, Some(vec![vec![-1.5]]));
}

#[test]
fn overrides_win() {
    let ov = Overrides {
        seed: Some(9),
        runs: Some(3),
        iters: Some(11),
        out: Some("elsewhere".into()),
        ..Overrides::default()
    };
    let c = parse_config(
        r#"{"preset": "scalar", "experiment": "pg-indirect", "runs": 2, "master_seed": 4, "output_path": "x"}"#,
        &ov,
    )
    .unwrap();
    assert_eq!((c.master_seed, c.runs, c.iters), (9, 3, 11));
    assert_eq!(c.output_path, "elsewhere");
}

#[test]
fn csv_of_no_records_is_a_header() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("r.csv");
    write_csv::<RunRecord>(&[], &p).unwrap();
    assert_eq!(
        fs::read_to_string(&p).unwrap(),
        "run,iteration,cost,gap,grad_est_norm,in_level_set,step_radius_ok,destabilized,samples_consumed\n"
    );
}

#[test]
fn csv_of_one_record() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("r.csv");
    write_csv(&[record(0, 3)], &p).unwrap();
    let text = fs::read_to_string(&p).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(text.ends_with('\n') && !text.contains('\r'));
    assert_eq!(lines[0].split(',').count(), 9);
    assert_eq!(lines[1], "0,3,0.33333333333333331,0.25,2,true,false,false,7");
    let summary = RunSummary {
        run: 0,
        initial_cost: 1.0,
        final_cost: 0.5,
        final_gap: 0.1,
        min_cost: 0.5,
        diverged_at: None,
        iterations: 10,
        skipped_updates: 0,
        samples_consumed: 10,
    };
    write_csv(&[summary], &p).unwrap();
    let text = fs::read_to_string(&p).unwrap();
    assert_eq!(text.lines().nth(1).unwrap(), "0,1,0.5,0.10000000000000001,0.5,,10,0,10");
}

#[test]
fn third_round_trips() {
    let s = format_float(1.0 / 3.0);
    assert_eq!(s, "0.33333333333333331");
    assert_eq!(s.parse::<f64>().unwrap().to_bits(), (1.0f64 / 3.0).to_bits());
}

#[test]
fn csv_write_failure_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("missing").join("r.csv");
    let err = write_csv::<RunRecord>(&[], &p).unwrap_err();
    assert!(err.to_string().contains("missing"));
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn constants_on_scalar() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = parse(r#"{"preset": "scalar", "experiment": "constants"}"#).unwrap();
    c.output_path = dir.path().to_str().unwrap().into();
    let report = run_experiment(&c).unwrap();
    let t = report.output.table("constants").unwrap();
    assert_eq!(t.rows.len(), 1);
    assert!((t.floats("j0")[0] - 8.0 / 3.0).abs() < 1e-12);
    assert!((t.floats("mu")[0] - 0.264_539_076_412_86).abs() < 1e-9);
    assert!(dir.path().join("constants.csv").exists());
    let meta: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["experiment"], "constants");
    assert_eq!(meta["input_hash"], input_hash(&c));
    assert_eq!(meta["config"]["preset"], "scalar");
    assert_eq!(meta["outputs"][0]["file"], "constants.csv");
}

#[test]
fn schedule_report_is_emitted_when_a_schedule_is_given() {
    let c = parse(
        r#"{"preset": "scalar", "experiment": "constants",
            "schedule": {"form": "power_floor", "eta0": 0.01, "kappa": 0.75, "divisor": 1.0}}"#,
    )
    .unwrap();
    let out = compute(&c).unwrap();
    let t = out.table("schedule_report").unwrap();
    assert_eq!(t.rows.len(), 1);
    assert!(t.floats("eta0_scale_to_pass")[0] > 0.0);
}

const DOCUMENTED_RUN_COLUMNS: [&str; 9] = [
    "run",
    "iteration",
    "cost",
    "gap",
    "grad_est_norm",
    "in_level_set",
    "step_radius_ok",
    "destabilized",
    "samples_consumed",
];

fn small(experiment: &str, extra: &str) -> lqrpg::ExperimentConfig {
    parse(&format!(
        r#"{{"preset": "benchmark3", "experiment": "{experiment}", "runs": 3, "iters": 40, "master_seed": 5{extra}}}"#
    ))
    .unwrap()
}

#[test]
fn documented_columns_are_present() {
    let cases = [
        (small("sgd-synthetic", ""), 4),
        (small("pg-indirect", r#", "pg_indirect": {"t0": 20}"#), 2),
        (small("pg-direct", r#", "pg_direct": {"evaluation": "exact"}"#), 2),
    ];
    for (c, series) in cases {
        let out = compute(&c).unwrap();
        assert_eq!(out.tables.len(), series + 1);
        for t in &out.tables[..series] {
            for col in DOCUMENTED_RUN_COLUMNS {
                assert!(t.column(col).is_some(), "{} lacks {col}", t.name);
            }
            assert_eq!(t.rows.len(), 3 * 41);
        }
        let summary = out.table("summary").unwrap();
        for col in ["series", "run", "final_gap", "diverged_at", "c_star"] {
            assert!(summary.column(col).is_some());
        }
        assert_eq!(summary.rows.len(), 3 * series);
    }

    let c = parse(
        r#"{"preset": "benchmark3", "experiment": "oracle-indirect", "runs": 4,
            "oracle_indirect": {"noise_levels": [1e-4, 1e-3], "t0": 20, "checkpoints": [100, 200]}}"#,
    )
    .unwrap();
    let t = compute(&c).unwrap().tables.remove(0);
    for col in ["iteration", "bias_norm", "variance", "noise_level"] {
        assert!(t.column(col).is_some());
    }
    assert_eq!(t.rows.len(), 4);

    let c = parse(
        r#"{"preset": "benchmark3", "experiment": "oracle-direct", "runs": 4,
            "oracle_direct": {"v": [0.01, 0.1], "n": [1, 2], "ell": 50}}"#,
    )
    .unwrap();
    let t = compute(&c).unwrap().tables.remove(0);
    for col in ["v", "n", "ell", "bias_norm", "variance", "std_error"] {
        assert!(t.column(col).is_some());
    }
    assert_eq!(t.rows.len(), 4);
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn metadata_without_timestamp(dir: &Path) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("metadata.json")).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("created_unix");
    v["config"].as_object_mut().unwrap().remove("output_path");
    v
}

#[test]
fn same_seed_same_bytes() {
    let root = tempfile::tempdir().unwrap();
    let mut c = small("sgd-synthetic", "");
    let mut outs = Vec::new();
    for name in ["a", "b"] {
        c.output_path = root.path().join(name).to_str().unwrap().into();
        run_experiment(&c).unwrap();
        outs.push(root.path().join(name));
    }
    let (a, b) = (dir_bytes(&outs[0]), dir_bytes(&outs[1]));
    assert_eq!(a.len(), 5);
    assert_eq!(a, b);
    let ma = metadata_without_timestamp(&outs[0]);
    assert_eq!(ma, metadata_without_timestamp(&outs[1]));

    c.master_seed = 6;
    c.output_path = root.path().join("c").to_str().unwrap().into();
    run_experiment(&c).unwrap();
    assert_ne!(dir_bytes(&root.path().join("c")), a);
    assert_ne!(input_hash(&c), ma["input_hash"].as_str().unwrap());
}

#[test]
fn failed_write_leaves_nothing_behind() {
    let dir = tempfile::tempdir().unwrap();
    let c = small("sgd-synthetic", "");
    let out = compute(&c).unwrap();
    // A directory where the last table should go makes that write fail.
    fs::create_dir(dir.path().join("summary.csv")).unwrap();
    let err = write_outputs(dir.path(), &c, &out.tables).unwrap_err();
    assert!(matches!(err, HarnessError::Io { .. }));
    let left: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(left, vec![std::ffi::OsString::from("summary.csv")]);
}

#[test]
fn in_memory_table_matches_written_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("r.csv");
    let records = [record(0, 0), record(1, 5)];
    write_csv(&records, &p).unwrap();
    assert_eq!(fs::read(&p).unwrap(), Table::from_rows("records", &records).to_bytes());
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"preset": "scalar"}"#);
    let out = dir.path().join("out");

    let ok = bin()
        .args(["constants", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(out.join("constants.csv").exists() && out.join("metadata.json").exists());
    assert!(String::from_utf8_lossy(&ok.stdout).contains("mu = "));

    let bad_runs = bin().args(["sgd-synthetic", "--runs", "-1", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(bad_runs.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad_runs.stderr).contains("runs:"));

    let unknown = bin().args(["fly", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(unknown.status.code(), Some(1));

    let missing = bin().args(["constants", "--config"]).arg(dir.path().join("nope.json")).output().unwrap();
    assert_eq!(missing.status.code(), Some(1));

    let no_args = bin().output().unwrap();
    assert_eq!(no_args.status.code(), Some(1));

    // The output directory cannot be created beneath a regular file.
    let blocked = bin()
        .args(["constants", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(cfg.join("sub"))
        .output()
        .unwrap();
    assert_eq!(blocked.status.code(), Some(2));
}

#[test]
fn binary_runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"preset": "benchmark3", "runs": 2, "iters": 30}"#);
    for name in ["x", "y"] {
        let status = bin()
            .args(["pg-indirect", "--seed", "3", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir.path().join(name))
            .env("LQRPG_THREADS", "1")
            .status()
            .unwrap();
        assert!(status.success());
    }
    assert_eq!(dir_bytes(&dir.path().join("x")), dir_bytes(&dir.path().join("y")));
    assert_eq!(
        metadata_without_timestamp(&dir.path().join("x")),
        metadata_without_timestamp(&dir.path().join("y"))
    );
}
