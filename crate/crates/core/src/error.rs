use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

/// A single schema or domain violation found while validating a document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Dotted path of the offending field, e.g. `theta_prior.covariance`.
    pub path: String,
    pub message: String,
}

impl Violation {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("matrix is singular or ill-conditioned (min eigenvalue {min_eigenvalue:e})")]
    Singular { min_eigenvalue: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("work budget exceeded: {required} terms requested, budget is {budget}")]
    BudgetExceeded { required: f64, budget: f64 },

    #[error("cycle order k = {k} exceeds k_max = {k_max}")]
    OrderTooLarge { k: usize, k_max: usize },

    #[error("outside contiguity regime: {0}")]
    NotContiguous(String),

    #[error("U'U is rank deficient after {attempts} attempts (min eigenvalue {min_eigenvalue:e})")]
    RankDeficient { attempts: usize, min_eigenvalue: f64 },

    #[error("prior has no finite support: {0}")]
    NotDiscrete(String),

    #[error("invalid configuration:\n{}", format_violations(.0))]
    Config(Vec<Violation>),

    #[error("malformed matrix file {path}: {message}")]
    MatrixFormat { path: PathBuf, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serialize(String),
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| format!("  - {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the problem instance rather than by input files.
    pub fn is_domain(&self) -> bool {
        !matches!(
            self,
            Error::Config(_) | Error::Io { .. } | Error::MatrixFormat { .. } | Error::Serialize(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
