use std::path::PathBuf;
use thiserror::Error;

/// Simulator error. Each variant names the subsystem that rejected the
/// input, so a failed run can be attributed without a backtrace.
#[derive(Debug, Error)]
pub enum Error {
    #[error("media: {0}")]
    Media(String),
    #[error("broadcast: {0}")]
    Broadcast(String),
    #[error("unicast: {0}")]
    Unicast(String),
    #[error("session: {0}")]
    Session(String),
    #[error("sarp: {0}")]
    Sarp(String),
    #[error("player: {0}")]
    Player(String),
    #[error("engine: {0}")]
    Engine(String),
    /// Malformed input file; `line` is 1-based.
    #[error("{}:{line}: {reason}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
