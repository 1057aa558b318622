use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("invalid camera: {0}")]
    Camera(String),

    #[error("lambda {0} outside the trained range [16, 1024]")]
    Lambda(f32),

    #[error("lambda mismatch: stream carries {stream}, synthesis asked for {requested}")]
    LambdaMismatch { stream: f32, requested: f32 },

    #[error("bad format: {0}")]
    Format(String),

    #[error("truncated {what}: expected {expected} bytes, got {actual}")]
    Truncated {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("corrupt stream at byte {position}: {detail}")]
    Corrupt { position: usize, detail: String },

    #[error("symbol {symbol} outside alphabet of size {alphabet}")]
    Symbol { symbol: i32, alphabet: usize },

    #[error("deflate: {0}")]
    Deflate(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error("duplicate parameter identifier `{0}`")]
    DuplicateParam(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }
}
