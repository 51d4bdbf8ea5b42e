use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A value outside its admissible domain (negative time, unknown status, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("index error: {0}")]
    Index(String),

    #[error("duplicate entry at row {row}, column {col}")]
    DuplicateEntry { row: usize, col: usize },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    /// The censoring survival curve hits zero where a weight needs its inverse.
    #[error("censoring curve is zero before time {time}")]
    DegenerateCurve { time: f64 },

    /// A risk-set denominator accumulated to a non-positive value, which
    /// points at underflow or overflow in the exponentiated linear predictor.
    #[error("non-positive risk-set denominator {value} at position {position}")]
    NonPositiveDenominator { position: usize, value: f64 },

    #[error("linear predictor {value} at row {row} exceeds the exp-safe bound")]
    Overflow { row: usize, value: f64 },

    #[error("invalid column {0}")]
    InvalidColumn(usize),

    /// Zero curvature with a nonzero gradient; the Newton step is undefined.
    #[error("non-finite Newton step for column {column}")]
    NonFiniteStep { column: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("fold {fold} of replicate {replicate} has no events")]
    EmptyFold { replicate: usize, fold: usize },

    #[error("{failed} of {total} resamples failed")]
    TooManyFailures { failed: usize, total: usize },
}
