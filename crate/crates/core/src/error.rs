use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension {0} is not supported (1..={max})", max = crate::MAX_DIM)]
    UnsupportedDimension(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("axis {axis} out of range for dimension {dim}")]
    AxisOutOfRange { axis: usize, dim: usize },
    #[error("quasiperiodic index {0} exceeds the exact-evaluation range 2^40")]
    QuasiPeriodicRange(i64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("time {t} outside path coverage [0, {max}]")]
    OutOfRange { t: f64, max: f64 },
    #[error("window radius {radius} is smaller than the observable radius {needed}")]
    Sizing { radius: usize, needed: usize },
    #[error("periodic boundary requires a periodic environment whose periods divide {0}")]
    NotPeriodic(usize),
    #[error("solver stopped after {iterations} iterations at relative residual {residual:e}")]
    NotConverged { iterations: usize, residual: f64 },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
