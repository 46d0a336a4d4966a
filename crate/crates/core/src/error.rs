use thiserror::Error;

/// Errors produced by the fontpair library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("font `{font_id}` has dimension {found}, expected {expected}")]
    DimensionMismatch {
        font_id: String,
        expected: usize,
        found: usize,
    },

    #[error("vector dimensions differ: {0} vs {1}")]
    VectorDimension(usize, usize),

    #[error("duplicate font id `{0}`")]
    DuplicateFont(String),

    #[error("font `{0}` has a non-finite feature entry")]
    NonFinite(String),

    #[error("font `{0}` has an all-zero feature vector")]
    ZeroVector(String),

    #[error("zero-norm vector")]
    ZeroNorm,

    #[error("unknown font `{0}`")]
    UnknownFont(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cannot split: need at least 2 unique headers, found {0}")]
    TooFewHeaders(usize),

    #[error("negative sampling impossible: {available} non-positive combinations for {needed} negatives")]
    Saturated { available: usize, needed: usize },

    #[error("labeled pairs must contain both classes")]
    SingleClass,

    #[error("model variant {found} cannot be used here (expected {expected})")]
    WrongVariant {
        expected: &'static str,
        found: &'static str,
    },

    #[error("training diverged at epoch {epoch}: objective is {value}")]
    Diverged { epoch: usize, value: f64 },

    #[error("infeasible metric learning problem: {0}")]
    Infeasible(&'static str),

    #[error("no ConSim scoring hook registered")]
    NoConsimHook,

    #[error("comparison graph is disconnected: components {0:?}")]
    Disconnected(Vec<Vec<String>>),

    #[error("all chi-squared bins were omitted")]
    AllBinsOmitted,

    #[error("unknown method `{0}`")]
    UnknownMethod(String),

    #[error("snapshot version mismatch: found `{found}`, expected `{expected}`")]
    VersionMismatch { found: String, expected: String },

    #[error("snapshot checksum mismatch")]
    Checksum,

    #[error("snapshot is malformed: {0}")]
    Snapshot(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}
