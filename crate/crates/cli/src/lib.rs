//! Config-driven runs of the Manakov toolkit: each subcommand reads a
//! [`config::RunConfig`], writes digest-stamped CSV tables and a text report
//! into the output directory, and maps failures to exit codes.

pub mod commands;
pub mod config;
pub mod output;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Core(#[from] manakov_core::Error),

    /// The run completed but some check failed; the details are in the
    /// written report.
    #[error("{0} check(s) failed")]
    Failed(usize),
}

impl CliError {
    /// 2 for failed checks and numerical failures (count mismatches,
    /// overflow), 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        use manakov_core::Error as E;
        match self {
            CliError::Failed(_) => 2,
            CliError::Core(E::CountMismatch { .. } | E::NonFinite { .. }) => 2,
            _ => 1,
        }
    }
}
