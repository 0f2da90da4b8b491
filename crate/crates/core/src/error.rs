use std::path::PathBuf;

/// Errors produced by the simulator.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("variance must be non-negative, got {0}")]
    NegativeVariance(f64),

    #[error("Poisson rate must be non-negative, got {0}")]
    NegativeRate(f64),

    #[error("need {k} strictly positive weights, found {positive}")]
    InsufficientSupport { positive: usize, k: usize },

    #[error("weights must be finite and non-negative")]
    InvalidWeights,

    #[error("{op}: dimension mismatch (expected {expected}, found {found})")]
    DimensionMismatch {
        op: &'static str,
        expected: String,
        found: String,
    },

    #[error("output channel is degenerate: prior variance plus noise is zero")]
    DegenerateOutputChannel,

    #[error("input variance must be positive, got {0}")]
    NonPositiveVariance(f64),

    #[error("GAMP produced a non-finite iterate at iteration {iteration}")]
    GampDiverged { iteration: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("cannot build an empirical CDF from an empty sample")]
    EmptySamples,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dims(op: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        Error::DimensionMismatch {
            op,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
