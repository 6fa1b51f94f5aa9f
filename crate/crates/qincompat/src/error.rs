use thiserror::Error;

/// Crate-wide error type. Variants map onto the CLI exit codes: input and
/// validation problems exit with 2, semantic failures (hierarchy violations,
/// failed expectations) with 1, undecided verdicts where a decision was
/// required with 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown system label `{0}`")]
    UnknownLabel(String),
    #[error("duplicate system label `{0}`")]
    DuplicateLabel(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("matrix is not Hermitian (deviation {deviation:.3e} > tol {tol:.3e})")]
    NotHermitian { deviation: f64, tol: f64 },
    #[error("invalid {kind}: {detail}")]
    InvalidObject { kind: &'static str, detail: String },
    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),
    #[error("hierarchy implication violated: {0}")]
    ImplicationViolation(String),
    #[error("verdict undecided: {0}")]
    Undecided(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(kind: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidObject {
            kind,
            detail: detail.into(),
        }
    }

    pub fn shape(detail: impl Into<String>) -> Self {
        Error::Shape(detail.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
