use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, LeapError>;

#[derive(Debug, Error)]
pub enum LeapError {
    #[error("{path}: line {line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("degenerate regression target: {0}")]
    DegenerateTarget(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("bundle checksum mismatch: expected {expected}, computed {computed}")]
    Checksum { expected: String, computed: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<LeapError>,
    },
}

/// Broad class of an error, used to pick the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Numerical,
    Io,
}

impl LeapError {
    pub fn validation(msg: impl Into<String>) -> Self {
        LeapError::Validation(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        LeapError::Numerical(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LeapError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            LeapError::Stage { .. } => self,
            other => LeapError::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            LeapError::Parse { .. }
            | LeapError::Validation(_)
            | LeapError::Dimension(_)
            | LeapError::DegenerateTarget(_)
            | LeapError::Checksum { .. }
            | LeapError::Serde(_) => ErrorClass::Validation,
            LeapError::Numerical(_) => ErrorClass::Numerical,
            LeapError::Io { .. } => ErrorClass::Io,
            LeapError::Stage { source, .. } => source.class(),
        }
    }

    /// Process exit code: 2 validation, 3 numerical, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self.class() {
            ErrorClass::Validation => 2,
            ErrorClass::Numerical => 3,
            ErrorClass::Io => 4,
        }
    }
}

impl From<serde_json::Error> for LeapError {
    fn from(e: serde_json::Error) -> Self {
        LeapError::Serde(e.to_string())
    }
}
