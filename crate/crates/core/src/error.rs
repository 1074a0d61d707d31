use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A distribution or ambiguity set failed validation.
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    /// A function was undefined (non-finite) at a point it had to be evaluated on.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("lattice alignment error: {0}")]
    Alignment(String),

    /// A grid function did not cover the points a recursion step needed.
    #[error("grid too small: {0}")]
    GridSize(String),

    /// An enumeration or state-space guard was exceeded.
    #[error("size guard exceeded: {0}")]
    SizeGuard(String),

    /// A theorem hypothesis required by the computation does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Caller broke an API contract (mismatched dimensions, partial strategy, ...).
    #[error("contract violation: {0}")]
    Contract(String),
}
