use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input is empty")]
    EmptyInput,

    #[error("score at index {index} is not finite ({value})")]
    NonFiniteScore { index: usize, value: f64 },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("probability vector sums to {sum}, expected 1")]
    NotNormalized { sum: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("custom generator rejected: {0}")]
    InvalidGenerator(String),

    #[error("unknown divergence family `{0}` (expected chi2, tv or kl)")]
    UnknownFamily(String),

    #[error("calibration set is empty")]
    EmptyCalibration,

    #[error("threshold must be non-negative, got {0}")]
    NegativeThreshold(f64),

    #[error("epsilon {0} is infeasible for this configuration")]
    InfeasibleEpsilon(f64),

    #[error("no epsilon on the search grid yields a quantile level <= 1")]
    Infeasible,

    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("invalid configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),

    #[error("trial {trial} (seed stream {seed}) failed: {source}")]
    TrialFailed {
        trial: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
