use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid resolution: need at least 3 nodes per axis, got {0}")]
    InvalidResolution(usize),

    #[error("invalid dimension {0}: only 1 and 2 are supported")]
    InvalidDimension(usize),

    #[error("non-finite value {value} when sampling at node {node} ({coords:?})")]
    Sampling {
        node: usize,
        coords: Vec<f64>,
        value: f64,
    },

    #[error("expression parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error(
        "infeasible problem: boundary value {boundary} violates obstacle {obstacle} at node {node}"
    )]
    Infeasible {
        node: usize,
        boundary: f64,
        obstacle: f64,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("seed rejected at node {node} (residual {value}): {reason}")]
    RejectedSeed {
        node: usize,
        value: f64,
        reason: String,
    },

    #[error("inner obstacle solve did not converge at outer step {step} (residual {residual})")]
    InnerSolve { step: usize, residual: f64 },

    #[error("demo audit failed: {0}")]
    DemoFailed(String),
}
