use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("epsilon must lie in (0, 1/2], got {0}")]
    BadEpsilon(String),
    #[error("dimension d must be at least 1")]
    BadDimension,
    #[error("d = {d} exceeds the analysis limit {limit}")]
    DimensionTooLarge { d: u64, limit: u64 },
    #[error("configuration needs total measure {required} > 1")]
    InfeasibleMeasure { required: String },
    #[error("step functions live on different atom spaces")]
    SpaceMismatch,
    #[error("exponent p must lie in (1, inf), got {0}")]
    BadExponent(f64),
    #[error("search budget must be positive")]
    BudgetZero,
    #[error("unknown relevant-quantity branch {0:?}")]
    BranchUnknown(String),
    #[error("division by zero: {0}")]
    DivisionByZero(&'static str),
    #[error("family is empty")]
    EmptyFamily,
    #[error("grid would need {cells} cells, above the cap of {cap}")]
    ResolutionOverflow { cells: u128, cap: u128 },
    #[error("configuration cannot be aligned to a rational grid: {0}")]
    NonAlignable(String),
    #[error("{0} is not permutation-symmetric and has no symmetric-mode representation")]
    NotSymmetric(&'static str),
    #[error("basis level m = {0} is too deep for an exact |Q0|")]
    LevelTooDeep(u64),
    #[error("step function values must be nonnegative")]
    NegativeValue,
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
