use thiserror::Error;

/// Errors raised by chart construction, field validation and the solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid chart: {0}")]
    InvalidChart(String),

    #[error("non-finite value {value} at node {node}")]
    NonFinite { node: usize, value: f64 },

    #[error("grid too small for stencil: axis {axis} has {points} points, margin {margin} required")]
    StencilTooWide {
        axis: usize,
        points: usize,
        margin: usize,
    },

    #[error("no valid interior nodes remain (margin {margin})")]
    EmptyInterior { margin: usize },

    #[error("matrix not invertible at node {node}")]
    Singular { node: usize },

    #[error("matrix not positive definite at node {node} (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { node: usize, min_eigenvalue: f64 },

    #[error("field not symmetric in slots {0:?} at node {1}")]
    NotSymmetric((usize, usize), usize),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("tau is not holomorphic: Cauchy-Riemann residual {residual:e} exceeds {tolerance:e}")]
    NotHolomorphic { residual: f64, tolerance: f64 },

    #[error("tau leaves the upper half plane at node {node} (Im tau = {im})")]
    OutsideUpperHalfPlane { node: usize, im: f64 },

    #[error("iterative solver did not converge: {iterations} iterations, relative residual {residual:e}")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("integration step underflow at s = {s}")]
    StepUnderflow { s: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
