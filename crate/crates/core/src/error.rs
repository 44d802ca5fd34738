use thiserror::Error;

/// Errors produced by the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("ppm at byte {offset}: {message}")]
    Ppm { offset: usize, message: String },

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("invalid architecture: {0}")]
    Architecture(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("dimension mismatch: {left} vs {right}")]
    Dimension { left: usize, right: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("row {row} has all pairwise distances equal to zero; deduplicate or jitter the input")]
    DuplicateRow { row: usize },

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("fingerprint mismatch: {left_name} has {left:016x}, {right_name} has {right:016x}")]
    Fingerprint {
        left_name: String,
        left: u64,
        right_name: String,
        right: u64,
    },

    #[error("bundle: {0}")]
    Bundle(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
