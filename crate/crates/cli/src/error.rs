use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}:{line}: {message}")]
    ConfigLine { path: String, line: usize, message: String },
    #[error("config: {0}")]
    Config(String),
    #[error("schema error in {path}: {message}")]
    Schema { path: PathBuf, message: String },
    #[error("nothing to plot: {0}")]
    EmptyPlot(String),
    #[error("arm `{arm}` (seed {seed}) failed: {source}")]
    Arm {
        arm: String,
        seed: u64,
        #[source]
        source: opdlab_core::Error,
    },
    #[error(transparent)]
    Core(#[from] opdlab_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Runtime(String),
}

impl HarnessError {
    /// 2 for configuration problems, 3 for everything that fails at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::ConfigLine { .. } | HarnessError::Config(_) => 2,
            _ => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
