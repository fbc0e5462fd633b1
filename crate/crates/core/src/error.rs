use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("observation matrix has no rows or no columns")]
    EmptyMatrix,

    #[error("answer vector is empty")]
    EmptyVector,

    #[error("row {row} has {got} columns, expected {expected}")]
    RaggedRows { row: usize, expected: usize, got: usize },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("variance at index {index} must be positive and finite, got {value}")]
    NonPositiveVariance { index: usize, value: f64 },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("need at least {needed} questions, got {got}")]
    TooFewQuestions { needed: usize, got: usize },

    #[error("input vector has zero norm")]
    ZeroNormInput,

    #[error("shrinkage weight alpha must be finite and nonnegative, got {0}")]
    InvalidAlpha(f64),

    #[error("variance estimator {0} needs the raw observation matrix")]
    RequiresObservations(&'static str),

    #[error("BLUE needs worker variances but none were supplied")]
    MissingVariances,

    #[error("weights became non-finite at iteration {iteration}")]
    IterationDivergence { iteration: usize },

    #[error("invalid pipeline: {0}")]
    InvalidPipeline(String),

    #[error("alpha* must be resolved from a replicate stream before running the pipeline")]
    UnresolvedAlpha,

    #[error("need at least {needed} replicates, got {got}")]
    InsufficientReplicates { needed: usize, got: usize },

    #[error("degenerate denominator: {0}")]
    InsufficientSignal(&'static str),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("requested {requested_rows}x{requested_cols} sample from a {rows}x{cols} dataset")]
    RequestTooLarge {
        requested_rows: usize,
        requested_cols: usize,
        rows: usize,
        cols: usize,
    },

    #[error("dataset has no ground truth")]
    NoGroundTruth,

    #[error("more than one ground-truth row (line {line})")]
    DuplicateGroundTruth { line: usize },

    #[error("parse error at line {line}, column {col}: {message}")]
    ParseError { line: usize, col: usize, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
