use thiserror::Error;

/// Errors produced by the calmix core library.
///
/// The variants are grouped by how callers are expected to react:
/// input problems (`InvalidArgument`, `Parse`, `Validation`) are caller
/// mistakes, `DegeneratePrototypes` flags unusable class geometry,
/// `SolverFailure` and `TrainingFailure` mean a numeric routine gave up.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error at row {row}: {message}")]
    Validation { row: usize, message: String },

    #[error("degenerate prototypes: classes {class_i} and {class_j} are separated by squared distance {dist_sq:.3e} (threshold 1e-12)")]
    DegeneratePrototypes {
        class_i: usize,
        class_j: usize,
        dist_sq: f64,
    },

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("training diverged: non-finite loss at epoch {epoch}")]
    TrainingFailure { epoch: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
