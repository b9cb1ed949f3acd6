use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("indices must be strictly increasing (position {position})")]
    UnsortedIndices { position: usize },

    #[error("invalid frequency grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("reference signal is identically zero")]
    ZeroReference,

    #[error("touchstone line {line}: {message}")]
    Touchstone { line: usize, message: String },

    #[error("pole {pole} coincides with grid frequency {frequency_hz} Hz")]
    PoleOnGrid { pole: String, frequency_hz: f64 },

    #[error("rank-deficient least-squares system (condition estimate {condition:.3e})")]
    RankDeficient { condition: f64 },

    #[error("fit diverged at iteration {iteration}: data loss {data_loss}, regularizer {reg_loss}")]
    Diverged {
        iteration: usize,
        data_loss: f64,
        reg_loss: f64,
        trace_tail: Vec<(f64, f64)>,
    },

    #[error("frequency grids of the inputs differ")]
    GridMismatch,
}

impl Error {
    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
