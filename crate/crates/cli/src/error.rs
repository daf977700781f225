use std::path::PathBuf;

use spinflow_core::events::EventError;
use spinflow_core::sim::ConfigError;
use spinflow_core::spin::SpinError;
use spinflow_core::tracker::TrackerError;
use thiserror::Error;

/// A pipeline stage failed; carries the originating module error.
#[derive(Debug, Error)]
pub enum StageError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Events {
        path: PathBuf,
        #[source]
        source: EventError,
    },
    #[error("simulate: {0}")]
    Simulate(#[from] ConfigError),
    #[error("track: {0}")]
    Track(#[from] TrackerError),
    #[error("estimate: {0}")]
    Estimate(#[from] SpinError),
}

impl StageError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// Event codec errors that are plain I/O failures are reported as such.
    pub fn events(path: impl Into<PathBuf>, source: EventError) -> Self {
        match source {
            EventError::Io(e) => Self::io(path, e),
            source => Self::Events {
                path: path.into(),
                source,
            },
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Stage(#[from] StageError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Stage(_) => 3,
        }
    }
}
