use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the simulator or the embedding pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A ratings or embedding file could not be used.
    #[error("input data error: {0}")]
    Data(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A matrix that needed to be inverted or factored was not.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// The matched positions do not span the space, so the generalized
    /// variance is zero and its log is undefined.
    #[error("degenerate sample: {0}")]
    Degenerate(String),

    /// Training produced a non-finite objective.
    #[error("training diverged at epoch {epoch}: objective {objective}")]
    Diverged {
        epoch: usize,
        objective: f64,
        last_finite: Box<crate::cf::EmbeddingModel>,
    },

    #[error("resource limit: {0}")]
    Resource(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
