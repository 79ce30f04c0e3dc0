use thiserror::Error;

/// Crate-wide error type.
#[derive(Error, Debug)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("non-finite result in {op}")]
    NonFinite { op: &'static str },

    #[error("backward requires a scalar, got shape {0:?}")]
    NonScalarBackward(Vec<usize>),

    #[error("tape already consumed by a backward pass")]
    TapeConsumed,

    #[error("variable does not belong to this tape")]
    ForeignVar,

    #[error("invalid class index {index} for {num_classes} classes")]
    InvalidClass { index: usize, num_classes: usize },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("layer stack does not compose: {0}")]
    BadLayerStack(String),

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("alphabet too large: {detail}")]
    AlphabetTooLarge { detail: String },

    #[error("malformed table: {0}")]
    BadTable(String),

    #[error("malformed file {path}: {detail}")]
    BadFile { path: String, detail: String },

    #[error("attack diverged: {0}")]
    AttackDiverged(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
