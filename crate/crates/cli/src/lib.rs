//! Experiment harness around the simulator core: configuration files, the
//! run/sweep drivers, small-sample statistics, and chart emission.

pub mod config;
pub mod plot;
pub mod runner;
pub mod stats;

use std::path::PathBuf;

/// Harness-level failure, carrying the exit code the binary reports.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Malformed configuration; the message names the offending key.
    #[error("config error: {0}")]
    Config(String),
    /// A run was rejected by a simulator module.
    #[error("run {id} failed: {source}")]
    Run {
        id: String,
        source: sarpsim_core::Error,
    },
    #[error("cannot access {}: {reason}", path.display())]
    Io { path: PathBuf, reason: String },
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.into(),
            reason: err.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
