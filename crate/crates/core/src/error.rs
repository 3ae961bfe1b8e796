use thiserror::Error;

/// Errors produced by model construction, training and inference.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training data is empty")]
    EmptyData,

    #[error("training sequence {index} has zero probability under the current parameters")]
    ZeroEvidence { index: usize },

    #[error("training sequence {index} has length {len}, which is not trainable here ({reason})")]
    UntrainableLength {
        index: usize,
        len: usize,
        reason: &'static str,
    },

    #[error("{what}: row {row} sums to {sum}, expected 1")]
    Normalization {
        what: &'static str,
        row: usize,
        sum: f64,
    },

    #[error("stationary distribution did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("derivation exceeded {0} expansions; the grammar does not terminate reliably")]
    ExpansionCap(usize),

    #[error("sequences of length {0} have zero probability under this grammar")]
    ZeroLengthProbability(usize),

    #[error("position {position} cannot be completed by any symbol")]
    NoCompletion { position: usize },

    #[error("model file, line {line}: {message}")]
    Format { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
