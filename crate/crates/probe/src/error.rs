use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("activation file: {message} (at byte {offset})")]
    Format { offset: u64, message: String },
    #[error("activation payload truncated: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training data: {0}")]
    Data(String),
    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("no eligible line pairs: {0}")]
    NoEligiblePairs(String),
    #[error(transparent)]
    Core(#[from] apz_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = ProbeError> = std::result::Result<T, E>;
