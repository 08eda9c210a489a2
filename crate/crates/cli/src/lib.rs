//! Batch front end: reads a model config, runs one command, writes
//! `report.json` plus CSV and SVG artifacts into the output directory.

pub mod args;
pub mod commands;
pub mod plot;

use std::path::Path;

use thiserror::Error;

pub use args::Cli;

#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable config, invalid model or scenario.
    #[error("{0}")]
    Invalid(String),
    /// A module failed while computing.
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<foodweb::ModelError> for CliError {
    fn from(e: foodweb::ModelError) -> Self {
        CliError::Invalid(format!("model: {e}"))
    }
}

impl From<foodweb::certificates::CertificateError> for CliError {
    fn from(e: foodweb::certificates::CertificateError) -> Self {
        use foodweb::certificates::CertificateError as E;
        match e {
            E::Fixpoint(inner) => CliError::Numerical(format!("fixpoint: {inner}")),
            other => CliError::Invalid(format!("certificates: {other}")),
        }
    }
}

impl From<foodweb::fixpoint::FixpointError> for CliError {
    fn from(e: foodweb::fixpoint::FixpointError) -> Self {
        CliError::Numerical(format!("fixpoint: {e}"))
    }
}

impl From<foodweb::sim::SimError> for CliError {
    fn from(e: foodweb::sim::SimError) -> Self {
        use foodweb::sim::SimError as E;
        match e {
            E::StepUnderflow { .. } | E::MaxSteps(_) | E::BoxViolation { .. } => {
                CliError::Numerical(format!("sim: {e}"))
            }
            other => CliError::Invalid(format!("sim: {other}")),
        }
    }
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::Invalid(format!("cannot write {}: {e}", path.display())))
}

/// Runs a parsed command and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match commands::dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
