use std::path::PathBuf;

use ifista::inexact::ProxError;
use ifista::solvers::SolverError;
use thiserror::Error;

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_DIVERGED: u8 = 2;
pub const EXIT_INNER_CAP: u8 = 3;
pub const EXIT_VERIFY: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Io { .. } => EXIT_CONFIG,
            CliError::Solver(e) => solver_exit_code(e),
            CliError::Verification(_) => EXIT_VERIFY,
        }
    }
}

pub fn solver_exit_code(e: &SolverError) -> u8 {
    match e {
        SolverError::Diverged { .. } | SolverError::NonFinite { .. } => EXIT_DIVERGED,
        SolverError::Prox {
            source: ProxError::InnerCap { .. },
            ..
        } => EXIT_INNER_CAP,
        _ => EXIT_CONFIG,
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Config(e.to_string())
    }
}
