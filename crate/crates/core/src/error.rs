use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value produced at step {step}")]
    NonFinite { step: usize },

    #[error("invalid time index {time} (horizon {horizon})")]
    InvalidTime { time: f64, horizon: usize },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("target ({x}, {y}) is outside the manipulator workspace")]
    OutOfWorkspace { x: f64, y: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("training diverged at episode {episode}: {reason}")]
    Diverged { episode: usize, reason: String },

    #[error("empty batch: {0}")]
    EmptyBatch(&'static str),

    #[error("empty region: {0}")]
    EmptyRegion(&'static str),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("table error on {path}: {source}")]
    Table {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
