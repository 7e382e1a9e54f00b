use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid construction: {0}")]
    Construction(String),
    #[error("resource cap exceeded: {0}")]
    Resource(String),
    #[error("non-finite value at iteration {iter}: loss={loss}, grad_norm={grad_norm}")]
    NonFinite { iter: usize, loss: f64, grad_norm: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("query budget exhausted after {0} queries")]
    BudgetExhausted(usize),
    #[error("assertion failed: {0}")]
    Assertion(String),
    #[error("retry cap of {0} batches exceeded")]
    RetryCap(usize),
}

pub type Result<T> = std::result::Result<T, LabError>;
