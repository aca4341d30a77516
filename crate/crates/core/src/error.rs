use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid image dimensions {width}x{height} for {len} bytes")]
    InvalidDimensions { width: usize, height: usize, len: usize },
    #[error("signal is empty")]
    EmptySignal,
    #[error("image is not binary (found value {0})")]
    NotBinary(u8),
    #[error("skeleton has a branch point at ({x}, {y})")]
    BranchPoint { x: usize, y: usize },
    #[error("coordinate ({x}, {y}) outside {width}x{height} image")]
    OutOfBounds { x: usize, y: usize, width: usize, height: usize },
    #[error("image yielded no usable ridge segments")]
    NoRidges,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: String, got: String },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("dictionary is empty")]
    EmptyDictionary,
    #[error("input {width}x{height} is smaller than the minimum 8x8")]
    TooSmall { width: usize, height: usize },
    #[error("backward called without a recorded forward pass")]
    NoTape,
    #[error("empty batch")]
    EmptyBatch,
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("corrupt artifact: {0}")]
    Corrupt(String),
    #[error("{0}")]
    Corpus(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("image codec: {0}")]
    Codec(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn dims(expected: impl std::fmt::Display, got: impl std::fmt::Display) -> Self {
        Error::DimMismatch { expected: expected.to_string(), got: got.to_string() }
    }
}
