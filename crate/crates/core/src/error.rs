use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhaseError {
    #[error("dimension {0} is too small (need at least 2)")]
    InvalidDimension(usize),
    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("angle {0} outside [0, 2π]")]
    AngleOutOfRange(f64),
    #[error("state is the zero vector")]
    ZeroState,
    #[error("state is not normalized (norm² = {0})")]
    NotNormalized(f64),
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("generator `{id}` failed at ({n}, {n_prime})")]
    GeneratorFailure { id: String, n: usize, n_prime: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("numerical validation failed: {0}")]
    Validation(String),
}

pub type Result<T> = std::result::Result<T, PhaseError>;
