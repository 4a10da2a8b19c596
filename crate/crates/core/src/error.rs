use thiserror::Error;

/// Errors raised by the modelling and inference routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("filter `{0}` contains no grid points")]
    EmptyFilter(String),

    #[error("Poisson rate {0} exceeds the supported maximum")]
    RateOverflow(f64),

    #[error("Cholesky factorization failed even with jitter {jitter:e}")]
    Cholesky { jitter: f64 },

    #[error("G-function series did not converge (sigma={sigma}, m={m}, last term {last_term:e})")]
    SeriesNonConvergence { sigma: f64, m: f64, last_term: f64 },

    #[error("correlation {value} left [-1, 1] during moment recursion")]
    CorrelationOutOfRange { value: f64 },

    #[error("multivariate Lambert W did not converge after {iterations} iterations (residual {residual:e})")]
    LambertNonConvergence { iterations: usize, residual: f64 },

    #[error("non-positive determinant in Laplace approximation")]
    NonPositiveDeterminant,

    #[error("quadrature dimension {0} exceeds the tensor-grid limit of 4")]
    QuadratureDimension(usize),

    #[error("history probability underflowed (log pmf {0})")]
    HistoryUnderflow(f64),

    #[error("all particle likelihoods underflowed; particle system is degenerate")]
    DegenerateParticles,

    #[error("no filter could be scored: {0}")]
    NoScorableFilter(String),

    #[error("strategy requires exactly two templates, found {0}")]
    GreedyNeedsTwoTemplates(usize),

    #[error("unknown filter `{0}`")]
    UnknownFilter(String),

    #[error("session is not in the expected state: {0}")]
    WrongState(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
