use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the solvers and diagnostics.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid resolution: need at least 2 cells, got {0}")]
    InvalidResolution(usize),

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("shape mismatch: expected {expected} values, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("non-positive sample {value} at cell {index}")]
    Positivity { index: usize, value: f64 },

    #[error("unsupported exponent q = {0}")]
    UnsupportedExponent(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate CDF: density vanishes at cell {0}")]
    DegenerateCdf(usize),

    #[error("mass mismatch: {0} vs {1}")]
    MassMismatch(f64, f64),

    #[error("too many atoms: {0} (at most 8 supported)")]
    TooManyAtoms(usize),

    #[error("atoms must have equal weights and equal counts")]
    UnequalAtoms,

    #[error("JKO step did not converge after {iterations} iterations (gradient residual {residual:e})")]
    StepFailed { iterations: usize, residual: f64 },

    #[error("JKO step degenerate: density floor hit at cell {cell} (residual {residual:e})")]
    DegenerateStep { cell: usize, residual: f64 },

    #[error("implicit Newton solve failed after {iterations} iterations (residual {residual:e})")]
    NewtonFailed { iterations: usize, residual: f64 },

    #[error("explicit step lost positivity after {retries} dt halvings")]
    PositivityLost { retries: usize },

    #[error("Moser exponent q0 = {q0} is not above the critical value {threshold}")]
    SubcriticalExponent { q0: f64, threshold: f64 },

    #[error("BV step condition violated: C1 * Lambda * tau = {0} >= 1")]
    BvCondition(f64),

    #[error("time grids of the two trajectories do not match")]
    TimeGridMismatch,

    #[error("non-positive value {0} where a positive one is required")]
    NonPositiveValue(f64),

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
