//! Driver for optimization-targeted fuzzing campaigns: SUT adapters, the
//! model gateway, the campaign loop and its on-disk layout.

pub mod campaign;
pub mod collect;
pub mod config;
pub mod gateway;
pub mod report;
pub mod sandbox;
pub mod sut;

use std::io;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error("{0}")]
    Usage(String),
    /// A campaign directory or record file that cannot be read back.
    #[error("corrupt campaign data: {0}")]
    Corrupt(String),
    #[error("{0}")]
    Environment(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl Error {
    /// Process exit code: 2 for usage, config and corrupt data, 3 for the
    /// environment.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Usage(_) | Error::Corrupt(_) => 2,
            Error::Environment(_) | Error::Io(_) => 3,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.into())
    }
}
