use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("capacity exhausted in pool `{pool}`: need {needed}, have {available}")]
    Capacity {
        pool: String,
        needed: usize,
        available: usize,
    },

    #[error("unknown entity `{0}`")]
    UnknownEntity(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("sequence of {len} tokens exceeds context length {context}")]
    Length { len: usize, context: usize },

    #[error("training diverged at step {step}: loss is {loss}")]
    Divergence { step: u64, loss: f64 },

    #[error("non-finite gradient in `{term}`")]
    NonFiniteGradient { term: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("corrupt snapshot: {0}")]
    Snapshot(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
