use thiserror::Error;

/// Everything that can go wrong inside the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension {0} not supported (expected 1, 2 or 3)")]
    Dimension(usize),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("singular system: pivot {value:e} at row {row}")]
    Singular { row: usize, value: f64 },
    #[error("linear solve residual {0:e} above tolerance")]
    Residual(f64),
    #[error("newton: no convergence after {iterations} iterations (residual {residual:e})")]
    NewtonMaxIter { iterations: usize, residual: f64 },
    #[error("newton: line search failed at iteration {iteration} (residual {residual:e})")]
    LineSearch { iteration: usize, residual: f64 },
    #[error("solvability violated: <g,Q> = {inner:e} (allowed {allowed:e})")]
    Solvability { inner: f64, allowed: f64 },
    #[error("profile system ({j},{k}): {reason}")]
    Profile { j: usize, k: usize, reason: String },
    #[error("eigensolver did not converge: {0}")]
    Eigen(String),
    #[error("quadrature: {0}")]
    Quadrature(String),
    #[error("root finding: {0}")]
    Root(String),
    #[error("ode step size collapsed at s = {0}")]
    StepSize(f64),
    #[error("fit window spans {decades:.3} decades, need at least {required}")]
    WindowTooShort { decades: f64, required: f64 },
    #[error("resolution: {0}")]
    Resolution(String),
    #[error("stagnation: {0}")]
    Stagnation(String),
    #[error("decomposition failed: {0}")]
    Decompose(String),
}

pub type Result<T> = std::result::Result<T, Error>;
