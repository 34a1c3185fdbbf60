use thiserror::Error;

/// Errors raised by the toolkit.
///
/// Variants map onto the three failure families the CLI distinguishes:
/// contract/hypothesis violations, capacity or coverage problems, and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("kernel structure mismatch: {0}")]
    StructureMismatch(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("noise lattice does not cover kernel support: {0}")]
    Coverage(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("empty candidate set: {0}")]
    EmptyCandidates(String),

    #[error("bandwidth is not in the class B(A): {0}")]
    NotInClass(String),

    #[error("missing constant: {0}")]
    MissingConstant(String),

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("insufficient resolution: {0}")]
    InsufficientResolution(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors that signal a violated precondition of a theorem or
    /// an operation contract (exit code 3 in the CLI).
    pub fn is_contract(&self) -> bool {
        matches!(
            self,
            Error::StructureMismatch(_)
                | Error::Domain(_)
                | Error::NotInClass(_)
                | Error::Hypothesis(_)
                | Error::InvalidKernel(_)
                | Error::MissingConstant(_)
                | Error::EmptyCandidates(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
