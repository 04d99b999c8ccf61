use thiserror::Error;

pub type Result<T> = std::result::Result<T, LabError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix data of length {len} is not square")]
    NotSquare { len: usize },

    #[error("state is not normalized (norm² = {norm_sq})")]
    NotNormalized { norm_sq: f64 },

    /// A projection or normalization fell below the degeneracy floor.
    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    #[error("observable is not a Hermitian involution (residual {residual:e})")]
    NotInvolutory { residual: f64 },

    #[error("mixed particle kinds on the {side} side")]
    MixedKinds { side: &'static str },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("ensemble size must be at least 1")]
    EmptyEnsemble,

    #[error("need at least {min} trials, got {found}")]
    TooFewTrials { min: usize, found: usize },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("malformed ensemble record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
}
