use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("record {index}: timestamp {value} is not finite")]
    NonFiniteTimestamp { index: usize, value: f64 },

    #[error("node id {id} out of range (graph has {count} nodes)")]
    InvalidNode { id: usize, count: usize },

    #[error("edge id {id} out of range (graph has {count} edges)")]
    InvalidEdge { id: usize, count: usize },

    #[error("edge {edge} is a self-loop on node {node}; dual graphs do not support self-loops")]
    SelfLoop { edge: usize, node: usize },

    #[error("timestamps given for {given} edges, dual graph has {expected} nodes")]
    MissingTimestamps { given: usize, expected: usize },

    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: [usize; 2],
        rhs: [usize; 2],
    },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("time offset must be nonnegative, got {0}")]
    NegativeTimeOffset(f64),

    #[error("metric undefined: need at least one positive and one negative label (got {positives} positives, {negatives} negatives)")]
    DegenerateLabels { positives: usize, negatives: usize },

    #[error("batch has no labeled targets")]
    NoLabels,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
