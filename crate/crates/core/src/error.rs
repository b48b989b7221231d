use thiserror::Error;

/// Errors raised by the numerical kernels, generators, trackers and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is rank deficient ({context})")]
    RankDeficient { context: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("columns are not orthonormal (max |B^T B - I| = {deviation:e})")]
    NotOrthonormal { deviation: f64 },

    #[error("invalid rank {r} for a {rows}x{cols} matrix")]
    InvalidRank { r: usize, rows: usize, cols: usize },

    #[error("least-squares system is ill-conditioned (condition number {cond:e})")]
    IllConditioned { cond: f64 },

    #[error("invalid change-time spacing: {0}")]
    InvalidSpacing(String),

    #[error("requested fractions are infeasible: {0}")]
    InfeasibleFractions(String),

    #[error("modified-CS solver did not converge after {iterations} iterations (residual {residual:e} > xi {xi:e})")]
    SolverDidNotConverge {
        iterations: usize,
        residual: f64,
        xi: f64,
    },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("summand shapes differ: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("power-method iterate lost rank at iteration {iteration}")]
    RankCollapse { iteration: usize },

    #[error("eigen-ratio R = {0} must be below 0.99")]
    RatioTooLarge(f64),

    #[error("invalid mode: {0}")]
    InvalidMode(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dims(expected: impl ToString, found: impl ToString) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
