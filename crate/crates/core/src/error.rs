use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported SH degree {0} (max 2)")]
    UnsupportedShDegree(usize),

    #[error("SH block has {got} coefficients, expected {expected}")]
    ShLength { expected: usize, got: usize },

    #[error("dimension mismatch: {0}")]
    Dimensions(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("semantic scoring needs at least one view")]
    NoViews,

    #[error("ply parse error at byte {offset}: {message}")]
    Ply { offset: u64, message: String },

    #[error("parse error in {path}:{line}: {message}")]
    Text {
        path: String,
        line: usize,
        message: String,
    },

    #[error("unknown synthetic layout '{0}'")]
    UnknownLayout(String),

    #[error("training diverged at iteration {iteration}: {message}")]
    Diverged { iteration: usize, message: String },

    #[error("image error for {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
