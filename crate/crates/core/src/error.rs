use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("graph has no edges")]
    EmptyGraph,

    #[error("node {node} out of range for graph with {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },

    #[error("structural error: {0}")]
    Structural(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("source must have at least one neighbor (node {0})")]
    IsolatedSource(usize),

    #[error("dense solve refused: dimension {dim} exceeds guard {limit}")]
    TooLargeForDense { dim: usize, limit: usize },

    #[error("singular system")]
    Singular,

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("mismatched benchmark records: {0}")]
    MismatchedRecords(String),

    #[error("report is missing sweep logs")]
    MissingLogs,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("bad cache file: {0}")]
    BadCache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
