use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid preconditioner: diagonal entry {index} is {value}, must be positive and finite")]
    InvalidPreconditioner { index: usize, value: f64 },

    #[error("invalid value for `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("round {t} is outside the horizon 1..={horizon}")]
    RoundOutOfRange { t: usize, horizon: usize },

    #[error("comparator did not converge: gradient mapping norm {achieved:e} after {iterations} iterations")]
    NoConvergence { achieved: f64, iterations: usize },

    #[error("round {t}: {source}")]
    Round {
        t: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn at_round(self, t: usize) -> Self {
        match self {
            e @ Error::Round { .. } => e,
            e => Error::Round { t, source: Box::new(e) },
        }
    }
}
