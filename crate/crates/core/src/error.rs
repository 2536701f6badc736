use thiserror::Error;

/// Crate-wide error type.
///
/// The variants map onto the CLI exit codes: argument errors exit with 2,
/// numeric non-convergence with 3, domain errors with 4.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("argument error: {0}")]
    Argument(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("invalid rule: {0}")]
    InvalidRule(String),

    #[error("rule is not normalizable: {0}")]
    NotNormalizable(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("approximation failure: {0}")]
    ApproximationFailure(String),
}

pub type Result<T> = std::result::Result<T, Error>;
