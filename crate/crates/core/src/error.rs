use std::path::PathBuf;

use m2b_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid audio: {0}")]
    InvalidAudio(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("segment is silent; cannot normalize its level")]
    SilentSegment,

    #[error("scene references unknown source waveform `{0}`")]
    UnknownSource(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("clip has {len} samples, needs at least {needed}")]
    ClipTooShort { len: usize, needed: usize },

    #[error("missing checkpoint: {0}")]
    MissingCheckpoint(String),

    #[error("reference signals are linearly dependent; BSS decomposition is undefined")]
    DegenerateReferences,

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("malformed {kind}: {detail}")]
    Format { kind: &'static str, detail: String },

    #[error("config error at line {line}: {detail}")]
    Config { line: usize, detail: String },

    #[error("{}: {source}", path.display())]
    Path {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(detail: impl Into<String>) -> Self {
        Error::ShapeMismatch(detail.into())
    }

    pub(crate) fn format(kind: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            kind,
            detail: detail.into(),
        }
    }

    pub(crate) fn at_path(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| Error::Path { path, source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
