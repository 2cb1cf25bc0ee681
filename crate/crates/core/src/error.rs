use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown point id {0}")]
    UnknownPoint(u64),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("operation requires Euclidean coordinates")]
    UnsupportedMetric,

    #[error("invalid metric: {0}")]
    InvalidMetric(String),

    #[error("target set is not contained in the root cube: point id {0} lies outside")]
    Containment(u64),

    #[error("graph is disconnected ({components} components)")]
    Disconnected { components: usize },

    #[error("malformed input: {0}")]
    Input(String),

    #[error("stage {stage}: {source}")]
    Stage { stage: String, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn at(stage: &str) -> impl FnOnce(Error) -> Error + '_ {
        move |e| Error::Stage { stage: stage.to_string(), source: Box::new(e) }
    }
}

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}
