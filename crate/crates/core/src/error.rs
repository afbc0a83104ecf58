use std::path::PathBuf;

/// Library error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not symmetric (relative asymmetry {asymmetry:.3e})")]
    Asymmetric { asymmetry: f64 },
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("singular or ill-conditioned matrix (condition estimate {condition:.3e})")]
    Singular { condition: f64 },
    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    Convergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("pair (A, B) is not controllable: controllability matrix rank {rank} < {n}")]
    Uncontrollable { rank: usize, n: usize },
    #[error("parse error in [{section}]{}: {reason}", key_suffix(.key))]
    Parse {
        section: String,
        key: String,
        reason: String,
    },
    #[error("invalid scenario value {key}: {reason}")]
    Validation { key: String, reason: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse classification used for process exit codes and FFI status codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorCategory {
    Parse,
    Validation,
    Convergence,
    Infeasible,
    Numerical,
    Io,
}

impl ErrorCategory {
    /// Process exit code for this category.
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Parse => 2,
            ErrorCategory::Validation => 3,
            ErrorCategory::Convergence => 4,
            ErrorCategory::Infeasible => 5,
            ErrorCategory::Numerical => 6,
            ErrorCategory::Io => 7,
        }
    }
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Parse { .. } => ErrorCategory::Parse,
            Error::Dimension(_)
            | Error::Asymmetric { .. }
            | Error::NotPositiveDefinite(_)
            | Error::Precondition(_)
            | Error::Domain(_)
            | Error::Uncontrollable { .. }
            | Error::Validation { .. } => ErrorCategory::Validation,
            Error::Convergence { .. } => ErrorCategory::Convergence,
            Error::Infeasible(_) => ErrorCategory::Infeasible,
            Error::Singular { .. } => ErrorCategory::Numerical,
            Error::Io { .. } => ErrorCategory::Io,
        }
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn validation(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            key: key.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

fn key_suffix(key: &str) -> String {
    if key.is_empty() {
        String::new()
    } else {
        format!(" {key}")
    }
}
