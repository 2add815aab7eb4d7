use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A malformed line in an input file.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// Input that parses but violates a data-model invariant.
    #[error("data error: {0}")]
    Data(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// An operation whose precondition does not hold for the current graph.
    #[error("invalid state: {0}")]
    State(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    /// The rank-one denominator vanished for this pair; the pair must be skipped.
    #[error("degenerate perturbation ({u}, {v}): denominator {denominator:e}")]
    DegeneratePerturbation { u: usize, v: usize, denominator: f64 },

    #[error("degree test: {0}")]
    DegreeTest(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
