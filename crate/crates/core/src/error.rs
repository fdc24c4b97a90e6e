use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("utterance `{id}`: {message}")]
    InvalidUtterance { id: String, message: String },

    #[error("corpus: {0}")]
    InvalidCorpus(String),

    #[error("synthesis spec: {0}")]
    InvalidSynthSpec(String),

    #[error("audio: {0}")]
    Audio(String),

    #[error("feature extraction: {0}")]
    Features(String),

    #[error("ablation: {0}")]
    Ablation(String),

    #[error("{op}: {message}")]
    Shape { op: &'static str, message: String },

    #[error("{op}: non-finite value in {stage}")]
    NonFinite { op: &'static str, stage: &'static str },

    #[error("model config: {0}")]
    Config(String),

    #[error("span mapping for `{id}`: {message}")]
    Spans { id: String, message: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("experiment: {0}")]
    Experiment(String),

    #[error("training run (fold {fold}, seed {seed}) diverged at epoch {epoch}: {message}")]
    Diverged {
        fold: usize,
        seed: u64,
        epoch: usize,
        message: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(op: &'static str, message: impl Into<String>) -> Self {
        Error::Shape {
            op,
            message: message.into(),
        }
    }
}
