use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Every failure maps onto one documented exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, a config that does not match its stage schema, or an
    /// input record that does not match its file schema.
    #[error("{0}")]
    Schema(String),
    #[error("missing input {}", .0.display())]
    MissingInput(PathBuf),
    #[error("digest mismatch for {}: manifest records {expected}, file hashes to {actual}", path.display())]
    DigestMismatch { path: PathBuf, expected: String, actual: String },
    #[error("{0}")]
    Stage(String),
    #[error("{failed} validation check(s) failed")]
    Validation { failed: usize },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub const EXIT_SCHEMA: u8 = 2;
    pub const EXIT_MISSING_INPUT: u8 = 3;
    pub const EXIT_DIGEST: u8 = 4;
    pub const EXIT_STAGE: u8 = 5;
    pub const EXIT_VALIDATION: u8 = 6;

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Schema(_) => Self::EXIT_SCHEMA,
            CliError::MissingInput(_) => Self::EXIT_MISSING_INPUT,
            CliError::DigestMismatch { .. } => Self::EXIT_DIGEST,
            CliError::Stage(_) | CliError::Io { .. } => Self::EXIT_STAGE,
            CliError::Validation { .. } => Self::EXIT_VALIDATION,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

impl From<apz_core::Error> for CliError {
    fn from(e: apz_core::Error) -> Self {
        CliError::Stage(e.to_string())
    }
}

impl From<apz_probe::ProbeError> for CliError {
    fn from(e: apz_probe::ProbeError) -> Self {
        CliError::Stage(e.to_string())
    }
}
