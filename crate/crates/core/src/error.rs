use thiserror::Error;

/// Errors produced by the library.
///
/// Every fallible operation reports *why* an input is rejected; callers can
/// rely on the variant to distinguish bad parameters from blown enumeration
/// budgets or inputs outside the supported class.
#[derive(Debug, Error)]
pub enum CovdimError {
    /// Two objects that must agree in dimension (or length) do not.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A parameter is outside its documented domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A string failed to parse as the expected numeric type.
    #[error("parse error: {0}")]
    Parse(String),

    /// An enumeration or search would exceed its configured budget.
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),

    /// The input is well-formed but outside the class this operation supports.
    #[error("unsupported input: {0}")]
    Unsupported(String),

    /// An internal invariant failed; indicates a bug in this crate.
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, CovdimError>;
