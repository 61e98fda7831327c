use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("recommended sample size {value} is not an integer (off by {deviation:e}); adjust the cost")]
    NonIntegerNStar { value: f64, deviation: f64 },

    #[error("double factorial expects an odd argument or -1, got {0}")]
    EvenInput(i64),

    #[error("argument must be positive, got {0}")]
    NonpositiveX(f64),

    #[error("L must be positive, got {0}")]
    NonpositiveL(f64),

    #[error("m = {0} uses no corruption (m <= 4 simply pools); this quantity requires m >= 5")]
    NoCorruptionRegime(usize),

    #[error("G does not change sign on [{lo}, {hi}]: G(lo) = {g_lo}, G(hi) = {g_hi}")]
    NoSignChange { lo: f64, hi: f64, g_lo: f64, g_hi: f64 },

    #[error("bisection did not converge within {0} iterations")]
    MaxIterations(usize),

    #[error("quadrature failed to reach tolerance {tol:e} (estimated error {estimate:e})")]
    QuadratureFailure { tol: f64, estimate: f64 },

    #[error("non-finite value encountered in {0}")]
    Overflow(&'static str),

    #[error("subset of {requested} points requested from a dataset of {available}")]
    SubsetTooLarge { requested: usize, available: usize },

    #[error("no data available to form an estimate")]
    EmptyInput,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("agent {0} submitted an empty dataset")]
    EmptySubmission(usize),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}
