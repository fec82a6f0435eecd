use thiserror::Error;

/// Errors raised across the modelling, simulation and estimation layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("pixel index {index} outside 1..={pixel_count}")]
    PixelOutOfRange { index: i64, pixel_count: usize },

    #[error("matrix is {rows}x{cols}, expected a square matrix")]
    NotSquare { rows: usize, cols: usize },

    #[error("correlation order {order} exceeds the permanent cap {cap}")]
    OrderCapExceeded { order: usize, cap: usize },

    #[error("noise moment of order {order} outside supported range 1..={max}")]
    MomentOrderOutOfRange { order: u32, max: u32 },

    #[error("reference pixels must be all equal or all distinct, got {0:?}")]
    MixedReferenceMultiplicity(Vec<i64>),

    #[error("covariance matrix is not positive definite after conditioning")]
    NotPositiveDefinite,

    #[error("coherence matrix factorization failed: {0}")]
    Factorization(String),

    #[error("Fisher information matrix is singular")]
    SingularFisher,

    #[error("finite-difference step underflows for parameter `{0}`")]
    StepUnderflow(&'static str),

    #[error("step damping exhausted after {0} halvings")]
    DampingExhausted(usize),

    #[error("no correlation peak detected in the data")]
    PeakNotDetected,

    #[error("closed form and permanent disagree at pixel pair ({i}, {j}): {closed} vs {permanent}")]
    CrossCheckMismatch {
        i: usize,
        j: usize,
        closed: f64,
        permanent: f64,
    },

    #[error("pixel {0} is not present in the frame set")]
    MissingPixel(i64),

    #[error("data has length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("frame file: {0}")]
    Format(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
