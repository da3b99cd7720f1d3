use thiserror::Error;

/// Errors raised by integrators, solvers, and the harness.
///
/// Every variant maps onto a stable negative integer through [`Error::code`],
/// which is what [`crate::diagnostics::ErrCode`] carries.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    #[error("step size too small: h = {h:e} at t = {t}")]
    StepSizeTooSmall { t: f64, h: f64 },

    #[error("maximum number of steps ({0}) reached")]
    TooManySteps(usize),

    #[error("right-hand side evaluation failed: {0}")]
    RhsFailure(String),

    #[error("unknown method: {0}")]
    UnknownMethod(String),

    #[error("stage count {required} exceeds the maximum {max}; reduce the step")]
    ReduceStep { required: usize, max: usize },

    #[error("stepper does not support forcing")]
    ForcingUnsupported,

    #[error("subintegration failed in sequential method {i}, stage {j}, partition {k}: {source}")]
    Substep {
        i: usize,
        j: usize,
        k: usize,
        source: Box<Error>,
    },

    #[error("solution blows up at t = {t}")]
    BlowUp { t: f64 },

    #[error("fixed-point iteration did not converge in {iterations} iterations (residual {residual:e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("error handler stack holds only the default handler")]
    EmptyHandlerStack,

    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Stable integer code; 0 is reserved for success.
    pub fn code(&self) -> i32 {
        match self {
            Error::DimensionMismatch { .. } => -1,
            Error::InvalidArgument(_) => -2,
            Error::NonFinite { .. } => -3,
            Error::StepSizeTooSmall { .. } => -4,
            Error::TooManySteps(_) => -5,
            Error::RhsFailure(_) => -6,
            Error::UnknownMethod(_) => -7,
            Error::ReduceStep { .. } => -8,
            Error::ForcingUnsupported => -9,
            Error::Substep { .. } => -10,
            Error::BlowUp { .. } => -11,
            Error::NotConverged { .. } => -12,
            Error::IndexOutOfRange { .. } => -13,
            Error::EmptyHandlerStack => -14,
            Error::Io(_) => -15,
            Error::Parse(_) => -16,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}

pub(crate) fn check_finite(y: &[f64], context: &'static str) -> Result<()> {
    if cfg!(feature = "full-checks") && y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { context });
    }
    Ok(())
}
