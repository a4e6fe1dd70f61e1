use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown {kind} `{name}` (registered: {known})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        known: String,
    },

    #[error("empty search domain [{lo}, {hi}]")]
    EmptyDomain { lo: f64, hi: f64 },

    #[error("failed to bracket the minimizer over lambda: {0}")]
    Bracketing(String),

    #[error("no convergence after {iterations} iterations: {detail}")]
    NonConvergence { iterations: usize, detail: String },

    #[error("duality check failed: primal {primal} vs dual {dual} (tolerance {tol})")]
    DualityViolation { primal: f64, dual: f64, tol: f64 },

    #[error("bound violated: {0}")]
    BoundViolation(String),

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("plotting failed: {0}")]
    Plot(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
