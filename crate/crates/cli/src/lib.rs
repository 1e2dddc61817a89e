//! Experiment runner behind the `catprobe` binary.
//!
//! Exit codes: 0 success, 2 invalid configuration or input, 3 numerical or
//! estimation failure, 4 I/O failure.

use std::path::PathBuf;

pub mod config;
pub mod output;
pub mod run;

pub use config::{ConfigError, ExperimentConfig, Family, RawConfig};
pub use run::{run, RunOutcome};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] catprobe_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("worker pool: {0}")]
    Pool(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use catprobe_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(E::Config(_) | E::Precondition(_) | E::Data(_)) => 2,
            CliError::Core(E::Numerical(_) | E::Estimation(_)) => 3,
            CliError::Pool(_) => 3,
            CliError::Io { .. } => 4,
        }
    }
}
