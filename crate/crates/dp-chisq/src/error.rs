use thiserror::Error;

/// Library-wide error type.
///
/// `Invalid` covers rejected inputs (malformed probability vectors, out-of-range
/// parameters, dimension mismatches). `Numeric` covers routines that ran but
/// could not produce a trustworthy result (integration that failed to converge,
/// a malformed projector, solver non-convergence). The distinction matters to
/// the CLI, which maps them to different exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("numeric failure in {context}: {message}")]
    Numeric {
        context: &'static str,
        message: String,
    },

    #[error("{operation} requires the {required} mechanism")]
    UnsupportedMechanism {
        operation: &'static str,
        required: &'static str,
    },
}

impl Error {
    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::Invalid(message.into())
    }

    pub(crate) fn numeric(context: &'static str, message: impl Into<String>) -> Self {
        Error::Numeric {
            context,
            message: message.into(),
        }
    }

    /// Process exit code used by the CLI: 1 for validation problems,
    /// 2 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric { .. } => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
