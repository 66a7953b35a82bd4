use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("incompatible parameter sets: {0}")]
    IncompatibleParameterSets(String),

    #[error("fusion requires at least one parameter set")]
    EmptyFusionInput,

    #[error("non-finite value in tensor `{0}`")]
    NonFinite(String),

    #[error("unknown label `{label}` for dataset adapter `{adapter}`")]
    UnknownLabel { adapter: String, label: String },

    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("duplicate instance id `{0}`")]
    DuplicateId(String),

    #[error("unknown dataset adapter `{0}`")]
    UnknownAdapter(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("empty input")]
    EmptyInput,

    #[error("length mismatch: {0} gold labels vs {1} predictions")]
    LengthMismatch(usize, usize),

    #[error("fusion needs at least two clients, got {0}")]
    TooFewClients(usize),

    #[error("unknown client `{0}`")]
    UnknownClient(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

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

    /// True for errors caused by bad user configuration rather than runtime failure.
    pub fn is_config_error(&self) -> bool {
        matches!(self, Error::Config(_) | Error::UnknownAdapter(_))
    }
}
