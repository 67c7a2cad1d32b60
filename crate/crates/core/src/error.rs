use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Non-finite loss, gradient or update. `index` names the first offending coordinate.
    #[error("numeric failure: {what}{}", .index.map(|i| format!(" at parameter index {i}")).unwrap_or_default())]
    Numeric { what: String, index: Option<usize> },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("structural error: {0}")]
    Structure(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u16, expected: u16 },

    #[error("not found: {0}")]
    NotFound(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
