use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = RecpError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum RecpError {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("batch norm needs at least 2 rows in train mode, got {rows}")]
    DegenerateBatch { rows: usize },

    #[error("{path}:{line}: {msg}")]
    Ingest {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {malformed} of {total} data lines malformed, exceeds tolerance")]
    TooManyMalformed {
        path: PathBuf,
        malformed: usize,
        total: usize,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite loss at epoch {epoch} in term {term}")]
    NonFiniteLoss { epoch: usize, term: String },

    #[error("gradient check failed: {0}")]
    GradCheck(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl RecpError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        RecpError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 for data problems, 3 for numerical failures,
    /// 1 for anything that is a usage or configuration problem.
    pub fn exit_code(&self) -> i32 {
        match self {
            RecpError::Ingest { .. }
            | RecpError::TooManyMalformed { .. }
            | RecpError::Io { .. }
            | RecpError::Checkpoint(_)
            | RecpError::InvalidInput(_) => 2,
            RecpError::NonFiniteLoss { .. } | RecpError::GradCheck(_) => 3,
            RecpError::Dimension { .. } | RecpError::DegenerateBatch { .. } => 3,
            RecpError::Config(_) => 1,
        }
    }
}
