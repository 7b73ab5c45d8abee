use thiserror::Error;

/// Errors surfaced by the estimator pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("singular system: collinear columns [{}]; consider ridge regression", .columns.join(", "))]
    Singular { columns: Vec<String> },

    #[error("importance weight error: {0}")]
    Weight(String),

    #[error("no candidate satisfies the constraints")]
    Infeasible,
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Schema(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Config(e.to_string())
    }
}
