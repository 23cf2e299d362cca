use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}: bad header: expected `{expected}`, found `{found}`")]
    Header {
        file: String,
        expected: String,
        found: String,
    },

    /// `row` is the 1-based line number in the file; the header is row 1.
    #[error("{file}: row {row}: field `{field}`: {message}")]
    Parse {
        file: String,
        row: u64,
        field: String,
        message: String,
    },

    #[error("zero column: {0}")]
    ZeroColumn(String),

    #[error("unknown county ids: {}", .0.join(", "))]
    UnknownCounties(Vec<String>),

    #[error("need at least {needed} counties, got {got}")]
    TooFewCounties { needed: usize, got: usize },

    #[error("incomplete panel: {0}")]
    IncompletePanel(String),

    #[error("no observations for {0}")]
    NoObservations(String),

    #[error("zero variance: {0}")]
    ZeroVariance(String),

    #[error("empty storm-hour set: no observed outage falls inside a storm interval")]
    NoStormHours,

    #[error("need at least 2 high-impact samples to oversample, got {0}")]
    InsufficientRare(usize),

    #[error("empty feature matrix: {0}")]
    EmptyMatrix(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("scaler used before fit")]
    ScalerNotFitted,

    #[error("MAPE undefined: every actual value is zero")]
    MapeUndefined,

    #[error("R² undefined: {0}")]
    R2Undefined(String),

    #[error("non-finite training loss at epoch {0}")]
    NonFiniteLoss(usize),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("missing artifact {path}: run {stage} first")]
    MissingArtifact { stage: String, path: PathBuf },

    #[error("artifact {path} does not match the hash recorded by stage {stage}")]
    Tampered { stage: String, path: PathBuf },

    #[error("unsupported model format `{0}`")]
    ModelFormat(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// User-facing problems (bad input, bad config, wrong stage order) as
    /// opposed to failures inside the numerics.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::NonFiniteLoss(_))
    }
}
