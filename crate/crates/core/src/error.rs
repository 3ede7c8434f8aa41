use std::io;

use thiserror::Error;

/// Errors raised anywhere in the pruning pipeline.
#[derive(Debug, Error)]
pub enum PruneError {
    #[error("format error: {0}")]
    Format(String),

    #[error("unsupported layout: {0}")]
    UnsupportedLayout(String),

    #[error("data error: non-finite value {value} at row {row}, col {col}")]
    NonFinite { row: usize, col: usize, value: f64 },

    #[error("data error: {0}")]
    Data(String),

    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("degenerate embedding: row {row} has L2 norm {norm:e} below 1e-12")]
    DegenerateEmbedding { row: usize, norm: f64 },

    #[error("degenerate row {row}: no finite logit")]
    DegenerateRow { row: usize },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("invalid mode: {0}")]
    InvalidMode(String),

    #[error("index {index} out of range for {len} tokens")]
    Index { index: usize, len: usize },

    #[error("scale error: {0}")]
    Scale(String),

    #[error("unknown name: {0}")]
    Name(String),

    #[error("precondition failed: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, PruneError>;
