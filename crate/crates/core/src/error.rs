use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// The objective returned a non-finite value.
    #[error("objective is not finite ({value}) at {point:?}")]
    NonFiniteObjective { point: Vec<f64>, value: f64 },

    /// A growth-model bound evaluated to a negative or non-finite value.
    #[error("growth model `{which}` is invalid ({value}) at {point:?}")]
    InvalidBound {
        which: &'static str,
        point: Vec<f64>,
        value: f64,
    },

    #[error("problem `{0}` has no declared growth model")]
    MissingModel(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
