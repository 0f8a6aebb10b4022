//! Command implementations behind the `etas` binary: simulation, fitting,
//! the synthetic robustness studies, triggering-curve ensembles and runtime
//! benchmarks. Everything writes CSV or JSON.

pub mod commands;
pub mod config;
pub mod experiment;
pub mod output;

use std::path::PathBuf;

pub use commands::{
    bench, cmd_bench, cmd_fit, cmd_simulate, cmd_triggering, fit_catalogue, power_law_slope, simulate_fixture,
    triggering_curves, BenchPoint, CurveFamily, ParamSource,
};
pub use config::RunConfig;
pub use experiment::{run_experiment, Experiment, ExperimentKind, RunOutcome};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Model(#[from] etas_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Fit(_) => 3,
            CliError::Io { .. } | CliError::Model(_) => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, e: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.into(),
            message: e.to_string(),
        }
    }
}
