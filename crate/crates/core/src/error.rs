use std::path::PathBuf;

use thiserror::Error;

use crate::train::EpochRecord;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),

    #[error("corrupt audio file: {0}")]
    CorruptFile(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    SampleRateMismatch(u32, u32),

    #[error("reverb rendering requires a B-format impulse response")]
    MissingImpulseResponse,

    #[error("instrument `{0}` is not present")]
    UnknownInstrument(String),

    #[error("no frame with a non-silent reference")]
    NoValidFrames,

    #[error("both sample groups have zero variance")]
    DegenerateSamples,

    #[error("sampling pool cannot satisfy the request: {0}")]
    InsufficientPool(String),

    #[error("signal too short: need {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("incompatible weight file: {0}")]
    IncompatibleWeights(String),

    #[error("corrupt weight file: {0}")]
    CorruptWeights(String),

    #[error("gradient tape: {0}")]
    Graph(String),

    #[error("training diverged at epoch {epoch} (non-finite loss)")]
    Divergence { epoch: usize, history: Vec<EpochRecord> },

    #[error("manifest: {0}")]
    Manifest(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
