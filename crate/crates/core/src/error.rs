use thiserror::Error;

use crate::backend::BackendError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid unit {id}: {reason}")]
    InvalidUnit { id: String, reason: String },

    #[error("k must be at least 1, got {0}")]
    InvalidK(usize),

    #[error("unknown extractor plugin `{0}`")]
    UnknownExtractor(String),

    #[error("extractor `{plugin}` failed: {message}")]
    ExtractorFailure { plugin: String, message: String },

    #[error("no sentence of the summary contains a factual factor")]
    NoFactors,

    #[error("unit {id}: needs {needed} {kind} factors, found {found}")]
    InsufficientFactors {
        id: String,
        kind: String,
        needed: usize,
        found: usize,
    },

    #[error("fill count {fills} does not match factor count {factors}")]
    FillMismatch { factors: usize, fills: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unit {unit_id}: {source}")]
    Backend {
        unit_id: String,
        #[source]
        source: BackendError,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag for error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidUnit { .. } => "invalid_unit",
            Error::InvalidK(_) => "invalid_k",
            Error::UnknownExtractor(_) => "unknown_extractor",
            Error::ExtractorFailure { .. } => "extractor_failure",
            Error::NoFactors => "no_factors",
            Error::InsufficientFactors { .. } => "insufficient_factors",
            Error::FillMismatch { .. } => "fill_mismatch",
            Error::DegenerateInput(_) => "degenerate_input",
            Error::InvalidConfig(_) => "invalid_config",
            Error::Backend { source, .. } => source.kind(),
            Error::Parse { .. } => "parse_error",
            Error::Io(_) => "io_error",
            Error::Json(_) => "json_error",
        }
    }
}
