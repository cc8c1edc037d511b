use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("timestep {t} out of range 0..={max}")]
    TimestepOutOfRange { t: usize, max: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("triplet {id} is unlabeled but a label is required")]
    MissingLabel { id: u64 },

    #[error("annotator value {value} for triplet {id} is outside [0, 1]")]
    AnnotationOutOfRange { id: u64, value: f64 },

    #[error("annotator has no value for triplet {0}")]
    UnknownTriplet(u64),

    #[error("degenerate pair: x0 and x1 are identical")]
    DegeneratePair,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: usize, detail: String },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
