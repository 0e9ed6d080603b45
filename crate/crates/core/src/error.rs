use ndarray::Array2;
use thiserror::Error;

/// Last finite state of a run that blew up.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergedState {
    pub step: usize,
    pub time: f64,
    pub loss: f64,
    pub weights: Array2<f64>,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("bound unavailable: {0}")]
    UnsupportedBound(String),

    #[error("unsupported parameter-space dimension {0} (grids support p*d in {{1, 2}})")]
    UnsupportedDimension(usize),

    #[error("run diverged at step {} (last finite loss {})", .0.step, .0.loss)]
    Diverged(Box<DivergedState>),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn param_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
