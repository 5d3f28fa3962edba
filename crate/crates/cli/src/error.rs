use hsl_core::Error as CoreError;
use thiserror::Error;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DIVERGENCE: u8 = 3;
pub const EXIT_ASSERTION: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("assertion failed: {0}")]
    Assertion(String),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Assertion(_) => EXIT_ASSERTION,
            CliError::Core(e) => match e {
                CoreError::Diverged { .. } | CoreError::BlowUp { .. } => EXIT_DIVERGENCE,
                CoreError::Io(_) | CoreError::Csv(_) => 1,
                // bad grids, exponents, hypotheses, truncation and corrupt files
                // all trace back to the request
                _ => EXIT_CONFIG,
            },
            CliError::Io { .. } | CliError::Json(_) | CliError::Csv(_) => 1,
        }
    }
}
