use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use lqrpg::{load_config_with, run_experiment, Experiment, HarnessError, Overrides};

/// Policy-gradient experiments for the stochastic LQR problem.
#[derive(Debug, Parser)]
#[command(name = "lqrpg", version)]
struct Cli {
    /// oracle-indirect, oracle-direct, sgd-synthetic, pg-indirect, pg-direct or constants
    experiment: String,
    /// JSON configuration file
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    runs: Option<i64>,
    #[arg(long, allow_negative_numbers = true)]
    iters: Option<i64>,
    /// Output directory (overrides output_path)
    #[arg(long)]
    out: Option<String>,
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let experiment = Experiment::parse(&cli.experiment).ok_or_else(|| {
        let known: Vec<_> = Experiment::ALL.iter().map(|e| e.as_str()).collect();
        HarnessError::Config(vec![format!(
            "experiment: unknown {:?} (expected one of {})",
            cli.experiment,
            known.join(", ")
        )])
    })?;
    let overrides = Overrides {
        experiment: Some(experiment),
        seed: cli.seed,
        runs: cli.runs,
        iters: cli.iters,
        out: cli.out,
    };
    let config = load_config_with(&cli.config, &overrides)?;
    let report = run_experiment(&config)?;
    for note in &report.output.notes {
        println!("{note}");
    }
    for f in &report.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Some(n) = std::env::var("LQRPG_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
