use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unsupported mesh: {0}")]
    UnsupportedMesh(String),

    #[error("degenerate cell {cell} (volume {volume:e})")]
    DegenerateCell { cell: usize, volume: f64 },

    #[error("inverted cell {cell} (current volume {volume:e})")]
    InvertedCell { cell: usize, volume: f64 },

    #[error("zero-length vertex normal at vertex {0}")]
    DegenerateNormal(usize),

    #[error("field length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid expression `{expr}`: {message}")]
    Expression { expr: String, message: String },

    #[error("invalid target: {0}")]
    Target(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0}")]
    Unsupported(String),

    #[error("linear solver failed: {0}")]
    Solver(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
