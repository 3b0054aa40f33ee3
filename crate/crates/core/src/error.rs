use std::path::PathBuf;

use thiserror::Error;

use crate::tensor::Shape;

pub type Result<T, E = FuseError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum FuseError {
    #[error("{op}: shape mismatch, expected {expected}, got {actual}")]
    Shape {
        op: &'static str,
        expected: String,
        actual: String,
    },

    #[error("{op}: cannot align {shape} with factor {factor}")]
    Alignment {
        op: &'static str,
        shape: Shape,
        factor: usize,
    },

    #[error("missing or invalid channel `{channel}`: {reason}")]
    Schema { channel: String, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<FuseError>,
    },

    #[error("non-finite loss at step {step}: {diagnostics}")]
    NonFinite { step: usize, diagnostics: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl FuseError {
    pub(crate) fn shape(op: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        FuseError::Shape {
            op,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FuseError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn schema(channel: impl Into<String>, reason: impl Into<String>) -> Self {
        FuseError::Schema {
            channel: channel.into(),
            reason: reason.into(),
        }
    }
}

/// Attaches a pipeline stage name to errors bubbling out of it.
pub(crate) trait StageContext<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageContext<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| FuseError::Stage {
            stage,
            source: Box::new(e),
        })
    }
}
