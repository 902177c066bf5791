//! Experiment harness: configuration, experiment dispatch and CSV output.

pub mod config;
pub mod experiments;
pub mod output;

use std::path::{Path, PathBuf};

pub use config::{load_config, load_config_with, parse_config, Experiment, ExperimentConfig, Overrides, Preset};
pub use experiments::ExperimentOutput;
pub use output::{format_float, write_csv, Cell, Row, Table};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("{experiment} failed: {source}")]
    Runtime {
        experiment: &'static str,
        #[source]
        source: lqrpg_core::Error,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    /// Process exit status: 1 for configuration problems, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            _ => 2,
        }
    }
}

/// What [`run_experiment`] produced and where it went.
#[derive(Debug)]
pub struct RunReport {
    pub output: ExperimentOutput,
    pub files: Vec<PathBuf>,
}

/// Runs the experiment without touching the filesystem.
pub fn compute(config: &ExperimentConfig) -> Result<ExperimentOutput, HarnessError> {
    experiments::run(config).map_err(|source| HarnessError::Runtime {
        experiment: config.experiment.as_str(),
        source,
    })
}

/// Runs the experiment and writes its CSV files and `metadata.json` under
/// `config.output_path`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport, HarnessError> {
    let output = compute(config)?;
    let files = output::write_outputs(Path::new(&config.output_path), config, &output.tables)?;
    Ok(RunReport { output, files })
}
