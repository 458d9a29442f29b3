use thiserror::Error;

/// Errors produced by the filtering, steady-state, and dynamic-programming code.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// The innovation covariance `G Σ G' + H H'` is numerically singular,
    /// which happens when `H = 0` meets a degenerate belief covariance.
    #[error("singular innovation covariance (condition estimate {condition:.3e})")]
    SingularInnovation { condition: f64 },

    /// An iterative solver exhausted its iteration budget.
    #[error("no convergence after {iterations} iterations (last residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    /// A scalar argument violates a documented precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value is structurally invalid.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A grid-based evaluation needed points outside the tabulated domain.
    #[error("grid escape: {0}")]
    GridEscape(String),
}

pub type Result<T> = std::result::Result<T, Error>;
