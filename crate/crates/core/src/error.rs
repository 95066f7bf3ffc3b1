use alloc::string::String;

/// Errors raised anywhere in the kernel.
///
/// The variants map one-to-one onto the CLI exit codes: validation and
/// configuration problems exit with 2, calibration failures with 3 and
/// estimation failures with 4.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("value {value} outside the calibrated range [{min}, {max}]")]
    OutOfRange { value: f64, min: f64, max: f64 },
    #[error("filter passes nothing (success probability {0:e})")]
    DegenerateFilter(f64),
    #[error("calibration of `{parameter}` failed: {reason}")]
    Calibration {
        parameter: &'static str,
        reason: String,
    },
    #[error("estimation error: {0}")]
    Estimation(String),
    #[error("maximum-likelihood search did not converge after {evaluations} evaluations")]
    NotConverged {
        evaluations: usize,
        /// Best iterate found, as a flattened row-major 4x4 `[re, im]` array.
        best: alloc::boxed::Box<[[f64; 2]; 16]>,
    },
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn estimation(msg: impl Into<String>) -> Self {
        Error::Estimation(msg.into())
    }

    pub(crate) fn calibration(parameter: &'static str, reason: impl Into<String>) -> Self {
        Error::Calibration {
            parameter,
            reason: reason.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_)
            | Error::Configuration(_)
            | Error::OutOfRange { .. }
            | Error::DegenerateFilter(_) => 2,
            Error::Calibration { .. } => 3,
            Error::Estimation(_) | Error::NotConverged { .. } => 4,
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
