//! Command-line experiments: configuration, output bundles and the
//! simulate / calibrate / infer / sweep / landscape / report commands.

pub mod bundle;
pub mod commands;
pub mod config;

use bathyfer::Error;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_ALL_DISCARDED: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("inference failed, all chains discarded: {0}")]
    AllDiscarded(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::AllDiscarded(_) => EXIT_ALL_DISCARDED,
            CliError::Core(e) => match e {
                Error::Stability { .. } | Error::Divergence { .. } | Error::Numerical(_) => EXIT_NUMERICAL,
                _ => EXIT_INPUT,
            },
        }
    }
}
