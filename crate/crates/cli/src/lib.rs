//! Command-line front end for the `ccm-adapt` library: scenario files,
//! simulation and verification runs, and artifact output.

pub mod commands;
pub mod config;

pub use config::ScenarioConfig;

use std::path::PathBuf;

pub mod exit {
    pub const OK: i32 = 0;
    pub const ERROR: i32 = 1;
    pub const DIVERGED: i32 = 2;
    pub const VERIFY_FAILED: i32 = 3;
    pub const OPTIMIZER_DIVERGED: i32 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot parse {what}: {reason}")]
    Parse { what: String, reason: String },

    #[error(transparent)]
    Core(#[from] ccm_adapt::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(ccm_adapt::Error::OptimizerDiverged { .. }) => exit::OPTIMIZER_DIVERGED,
            _ => exit::ERROR,
        }
    }
}
