use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("fixed point iteration did not converge: last iterate {last}, residual {residual}")]
    NonConvergence { last: f64, residual: f64 },

    #[error("degenerate input at layer {layer}, unit {unit}: normalizing variance {variance} is not positive")]
    DegenerateVariance { layer: usize, unit: usize, variance: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("realization {index}: {source}")]
    Realization {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("batch {index}: {source}")]
    Batch {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("idx: bad magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic { found: u32, expected: u32 },

    #[error("idx: truncated payload, expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("idx: image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("data already normalized or out of pixel range: {0}")]
    NotRawPixels(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
