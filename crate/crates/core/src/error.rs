use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, EhdError>;

#[derive(Debug, Error)]
pub enum EhdError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("{op}: {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("non-finite gradient at optimizer step {step}")]
    NonFiniteGradient { step: u64 },

    #[error("training diverged at step {step}: loss is {loss}")]
    Diverged { step: u64, loss: f64 },

    #[error("invalid event data: {0}")]
    InvalidData(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("input too large: {size} > {max}")]
    TooLarge { size: usize, max: usize },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl EhdError {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        EhdError::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn domain(op: &'static str, detail: impl Into<String>) -> Self {
        EhdError::Domain {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<String>, source: io::Error) -> Self {
        EhdError::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable code used by the command line front end.
    pub fn code(&self) -> &'static str {
        match self {
            EhdError::Shape { .. } => "E_SHAPE",
            EhdError::Domain { .. } => "E_DOMAIN",
            EhdError::NonFiniteGradient { .. } => "E_NAN_GRAD",
            EhdError::Diverged { .. } => "E_DIVERGED",
            EhdError::InvalidData(_) => "E_DATA",
            EhdError::Config(_) => "E_CONFIG",
            EhdError::Checkpoint(_) => "E_CHECKPOINT",
            EhdError::TooLarge { .. } => "E_TOO_LARGE",
            EhdError::Io { .. } => "E_IO",
            EhdError::Json(_) => "E_JSON",
        }
    }
}
