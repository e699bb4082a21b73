use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A reflection vector whose squared norm fell below the validity floor.
    #[error("reflection vector in column {column} is degenerate (squared norm {norm_sq:e})")]
    InvalidReflection { column: usize, norm_sq: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("non-finite gradient entries in tensor `{tensor}`")]
    NonFiniteGradient { tensor: String },

    #[error("QR decomposition failed at column {column}: matrix is numerically rank deficient")]
    Decomposition { column: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("unsupported regime: {0}")]
    Unsupported(String),

    #[error("reflection vector in column {column} collapsed after an update (squared norm {norm_sq:e})")]
    DegenerateParameter { column: usize, norm_sq: f64 },

    #[error("invalid task spec: {0}")]
    TaskSpec(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    /// A failure inside the training loop, tagged with the iteration.
    #[error("iteration {iteration}: {source}")]
    Training {
        iteration: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
