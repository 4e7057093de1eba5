use thiserror::Error;

/// Errors carry their process exit code: 1 usage, 2 missing artifact,
/// 3 numeric/runtime failure.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::MissingArtifact(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<school_core::CoreError> for CliError {
    fn from(e: school_core::CoreError) -> Self {
        use school_core::CoreError::*;
        match e {
            Io { .. } | Pgm { .. } | FrameResolutionMismatch { .. } => {
                CliError::MissingArtifact(e.to_string())
            }
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<school_learn::LearnError> for CliError {
    fn from(e: school_learn::LearnError) -> Self {
        use school_learn::LearnError::*;
        match e {
            MissingArtifact(_) => CliError::MissingArtifact(e.to_string()),
            Core(c) => CliError::from(c),
            EmptyDataset | EmptyInput | TooFewPoints { .. } => CliError::MissingArtifact(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Numeric(format!("io: {e}"))
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
