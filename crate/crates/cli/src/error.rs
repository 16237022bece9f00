use ehd_core::EhdError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] EhdError),

    #[error("missing checkpoint {path}; run `ehd {producer}` first")]
    MissingCheckpoint { path: String, producer: &'static str },

    #[error("missing input {path}; run `ehd {producer}` first")]
    MissingInput { path: String, producer: &'static str },

    #[error("{0} already exists; pass --force to overwrite")]
    Exists(String),

    #[error("checkpoint and configuration disagree: {0}")]
    Mismatch(String),

    #[error("{0}")]
    Usage(String),

    #[error("{failed} of {total} primitives exceed tolerance {tolerance}")]
    GradCheck {
        failed: usize,
        total: usize,
        tolerance: f64,
    },
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.code(),
            CliError::MissingCheckpoint { .. } => "E_MISSING_CHECKPOINT",
            CliError::MissingInput { .. } => "E_MISSING_INPUT",
            CliError::Exists(_) => "E_EXISTS",
            CliError::Mismatch(_) => "E_MISMATCH",
            CliError::Usage(_) => "E_USAGE",
            CliError::GradCheck { .. } => "E_GRADCHECK",
        }
    }

    /// `error[CODE]: message` on one line.
    pub fn line(&self) -> String {
        let msg = self.to_string().replace(['\n', '\r'], " ");
        format!("error[{}]: {msg}", self.code())
    }
}

pub fn config(msg: impl Into<String>) -> CliError {
    CliError::Core(EhdError::Config(msg.into()))
}
