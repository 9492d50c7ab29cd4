//! Crate-wide error type.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors reported by estimation, calibration and simulation routines.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its admissible domain.
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// The input sample is too short for the requested operation.
    #[error("insufficient data for {what}: need {need}, got {got}")]
    InsufficientData {
        what: String,
        need: usize,
        got: usize,
    },

    /// Requested grid resolution exceeds what the sample can support.
    #[error("grid resolution {m} exceeds sample length {t}")]
    Resolution { m: usize, t: usize },

    /// A series is constant and cannot be ranked or standardised.
    #[error("series '{name}' has zero variance")]
    ZeroVariance { name: String },

    /// A requested moment does not exist for the given tail index.
    #[error("moment of order {order} diverges for tail parameter nu = {nu}")]
    MomentDivergence { order: u32, nu: f64 },

    /// Correlation at +/-1 makes the requested quantity degenerate.
    #[error("degenerate correlation rho = {rho}")]
    DegenerateCorrelation { rho: f64 },

    /// A correlation matrix is not positive definite.
    #[error("correlation matrix is not positive definite: {context}")]
    NotPositiveDefinite { context: String },

    /// Interpolation was requested outside the tabulated range.
    #[error("value {value} outside tabulated range [{lo}, {hi}] for {what}")]
    Extrapolation {
        what: String,
        value: f64,
        lo: f64,
        hi: f64,
    },

    /// A least-squares design matrix is singular.
    #[error("singular design matrix in {context}")]
    SingularDesign { context: String },

    /// A likelihood Hessian fails the negative-definiteness check.
    #[error("Hessian is not negative definite (max eigenvalue {max_eig}); no update step taken")]
    HessianNotNegativeDefinite { max_eig: f64 },

    /// Volatility recursion produced a non-finite value.
    #[error("simulation blew up at step {step}")]
    BlowUp { step: usize },

    /// Feedback kernel violates the stationarity bound.
    #[error("non-stationary kernel: trace {trace} >= 1")]
    NonStationary { trace: f64 },

    /// Long-memory exponent outside the critical window.
    #[error(
        "exponent alpha = {alpha} outside (1, 1.5): the volatility cascade \
         is only critical inside this window"
    )]
    OutsideCriticalWindow { alpha: f64 },

    /// A probability came out materially negative.
    #[error("negative probability {value} at index {index}")]
    NegativeProbability { value: f64, index: usize },

    /// Factor loading matrix does not have full row rank.
    #[error("rank-deficient loading matrix: rank {rank} < {expected}")]
    RankDeficient { rank: usize, expected: usize },

    /// A numeric routine failed to converge.
    #[error("{what} failed to converge after {iterations} iterations")]
    NoConvergence {
        what: String,
        iterations: usize,
    },

    /// Dates are not strictly increasing or otherwise malformed.
    #[error("bad date axis: {0}")]
    BadDates(String),

    /// Malformed input table.
    #[error("malformed input: {0}")]
    MalformedInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Convenience constructor for [`Error::InvalidParameter`].
    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
