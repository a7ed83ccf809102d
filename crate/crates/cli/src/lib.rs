//! Config-driven experiment runner behind the `jumpsense` binary.

pub mod experiments;
pub mod output;
pub mod spec;

use std::path::Path;

use thiserror::Error;

pub use spec::ExperimentSpec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CliError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Io(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Trajectory,
    Master,
    Analytic,
    Klcheck,
    Table1,
    Fig2,
    Sensitivity,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Trajectory => "trajectory",
            Command::Master => "master",
            Command::Analytic => "analytic",
            Command::Klcheck => "klcheck",
            Command::Table1 => "table1",
            Command::Fig2 => "fig2",
            Command::Sensitivity => "sensitivity",
        }
    }
}

/// Computes every artifact first, then writes them; nothing is written on error.
pub fn run(command: Command, spec: &ExperimentSpec, out_dir: &Path) -> Result<Vec<std::path::PathBuf>, CliError> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.threads)
        .build()
        .map_err(|e| CliError::Validation(format!("threads: {e}")))?;
    let artifacts = pool.install(|| match command {
        Command::Trajectory => experiments::trajectory(spec),
        Command::Master => experiments::master(spec),
        Command::Analytic => experiments::analytic(spec),
        Command::Klcheck => experiments::klcheck(spec),
        Command::Table1 => experiments::table1(spec),
        Command::Fig2 => experiments::fig2(spec),
        Command::Sensitivity => experiments::sensitivity_cmd(spec),
    })?;
    output::write_all(out_dir, &artifacts)
}
