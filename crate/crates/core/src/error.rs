use std::path::PathBuf;

/// Errors produced by the trajectory-learning pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("hamiltonian asymmetry {max_asymmetry:e} cm^-1 exceeds {limit:e}")]
    Asymmetric { max_asymmetry: f64, limit: f64 },

    #[error("exciton energies {0} and {1} are degenerate within 1e-9 cm^-1")]
    Degenerate(usize, usize),

    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },

    #[error("bad file format: {0}")]
    Format(String),

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("model weights are not initialized")]
    Uninitialized,

    #[error("forward cache missing for backward pass")]
    MissingCache,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
