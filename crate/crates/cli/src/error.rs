use thiserror::Error;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("output self-check failed: {0}")]
    Integrity(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("config: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Json(_) => EXIT_USAGE,
            Self::Numerical(_) => EXIT_NUMERICAL,
            Self::Integrity(_) | Self::Io(_) => EXIT_FAILURE,
        }
    }
}

impl From<qdimer::Error> for CliError {
    fn from(e: qdimer::Error) -> Self {
        use qdimer::Error as E;
        match e {
            E::InvalidParticleNumber(_)
            | E::InvalidParameter(_)
            | E::DimensionMismatch { .. }
            | E::EmptyInput(_)
            | E::MemoryCap { .. } => Self::Usage(e.to_string()),
            E::Io(io) => Self::Io(io),
            other => Self::Numerical(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
