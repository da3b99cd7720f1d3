//! Structured logging and layered error handling.
//!
//! Log lines look like
//!
//! ```text
//! [INFO][rank 0][ErkEvolve][begin-step-attempt] step = 1, tn = 0, h = 0.000102986025609508
//! ```
//!
//! and vector payloads continue on following lines, one entry per line.
//! Errors are reported either as an [`ErrCode`] return value or through the
//! "last error" slot of an [`ErrorContext`], whose handler stack runs
//! newest-first.

mod logger;

use std::sync::Arc;

pub use logger::{format_scalar, format_sci, Level, LogRecord, Logger, SinkSpec, Value};

use crate::error::Error;

/// Where an error was raised.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Origin {
    pub function: String,
    pub module: String,
}

/// Integer status with a message; 0 means success and carries no message.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ErrCode {
    pub code: i32,
    pub message: String,
    pub origin: Origin,
}

impl ErrCode {
    pub fn success() -> Self {
        Self::default()
    }

    pub fn new(
        code: i32,
        message: impl Into<String>,
        function: impl Into<String>,
        module: impl Into<String>,
    ) -> Self {
        if code == 0 {
            return Self::success();
        }
        Self {
            code,
            message: message.into(),
            origin: Origin {
                function: function.into(),
                module: module.into(),
            },
        }
    }

    pub fn from_error(err: &Error, function: &str) -> Self {
        let module = function.split("::").next().unwrap_or(function);
        Self::new(err.code(), err.to_string(), function, module)
    }

    pub fn is_success(&self) -> bool {
        self.code == 0
    }
}

impl std::fmt::Display for ErrCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_success() {
            write!(f, "success")
        } else {
            write!(f, "{} (code {}) in {}", self.message, self.code, self.origin.function)
        }
    }
}

pub type ErrorHandler = Box<dyn FnMut(&ErrCode)>;

/// Per-instance error state: a handler stack plus the most recent error.
pub struct ErrorContext {
    logger: Arc<Logger>,
    handlers: Vec<ErrorHandler>,
    last_error: ErrCode,
}

impl ErrorContext {
    /// The bottom of the stack is a handler that logs an ERROR record.
    pub fn new(logger: Arc<Logger>) -> Self {
        let log = Arc::clone(&logger);
        let default: ErrorHandler = Box::new(move |err: &ErrCode| {
            log.log(
                &LogRecord::new(Level::Error, err.origin.function.clone(), "error")
                    .with("code", err.code as i64)
                    .with("message", err.message.clone()),
            );
        });
        Self {
            logger,
            handlers: vec![default],
            last_error: ErrCode::success(),
        }
    }

    pub fn logger(&self) -> &Arc<Logger> {
        &self.logger
    }

    pub fn push_error_handler(&mut self, handler: ErrorHandler) -> ErrCode {
        self.handlers.push(handler);
        ErrCode::success()
    }

    pub fn pop_error_handler(&mut self) -> ErrCode {
        if self.handlers.len() <= 1 {
            let err = ErrCode::from_error(&Error::EmptyHandlerStack, "ErrorContext::pop_error_handler");
            self.record(err.clone());
            return err;
        }
        self.handlers.pop();
        ErrCode::success()
    }

    pub fn handler_count(&self) -> usize {
        self.handlers.len()
    }

    /// Stores `err` as the last error and runs every handler, newest first.
    pub fn record(&mut self, err: ErrCode) {
        if err.is_success() {
            return;
        }
        for h in self.handlers.iter_mut().rev() {
            h(&err);
        }
        self.last_error = err;
    }

    pub fn record_error(&mut self, err: &Error, function: &str) -> ErrCode {
        let code = ErrCode::from_error(err, function);
        self.record(code.clone());
        code
    }

    /// Returns and clears the last error.
    pub fn get_last_error(&mut self) -> ErrCode {
        std::mem::take(&mut self.last_error)
    }

    /// Returns the last error without clearing it.
    pub fn peek_last_error(&self) -> &ErrCode {
        &self.last_error
    }

    pub fn clear_last_error(&mut self) {
        self.last_error = ErrCode::success();
    }

    /// Runs a fallible operation, recording any failure as the last error.
    pub fn check<T>(&mut self, function: &str, r: crate::error::Result<T>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.record_error(&e, function);
                None
            }
        }
    }
}

/// `Σ c_i x_i`. Returns a vector rather than a status; a length mismatch
/// yields an empty vector and is reported through `ctx`'s last error.
pub fn linear_combination(ctx: &mut ErrorContext, coeffs: &[f64], vecs: &[&[f64]]) -> Vec<f64> {
    let n = vecs.first().map_or(0, |v| v.len());
    let check = if coeffs.len() != vecs.len() {
        Err(Error::DimensionMismatch {
            expected: vecs.len(),
            actual: coeffs.len(),
        })
    } else {
        vecs.iter()
            .try_for_each(|v| crate::error::check_dim(n, v.len()))
    };
    if ctx.check("vector::linear_combination", check).is_none() {
        return Vec::new();
    }
    let mut out = vec![0.0; n];
    for (c, v) in coeffs.iter().zip(vecs) {
        crate::vector::axpy(*c, v, &mut out);
    }
    out
}
