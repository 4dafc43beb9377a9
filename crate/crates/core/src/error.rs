use std::path::PathBuf;

/// Errors raised while parsing a RAS1 file.
#[derive(Debug, thiserror::Error)]
pub enum ParseError {
    #[error("malformed RAS1 header: {0}")]
    MalformedHeader(String),
    #[error("payload length mismatch: expected {expected} bytes, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("non-finite value {value} at index {index}")]
    NonFinite { index: usize, value: f64 },
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: ParseError,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no textureless area found: the measure needs at least one region detected as textureless ({0})")]
    NoTexturelessArea(String),
    #[error("diffusion diverged at iteration {iteration}")]
    Divergence { iteration: usize },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("non-finite intermediate value in {0}")]
    NonFinite(&'static str),
    #[error("every grid point failed to evaluate")]
    AllGridPointsFailed,
    #[error("png export failed: {0}")]
    Image(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
