use thiserror::Error;

/// Failure modes shared by every module of the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("frame degenerate at node {node} ({x1:.4}, {x2:.4}): {reason}")]
    FrameDegenerate {
        node: usize,
        x1: f64,
        x2: f64,
        reason: String,
    },

    #[error("not elliptic: {0}")]
    NotElliptic(String),

    #[error("ill-posed boundary value problem: {0}")]
    IllPosed(String),

    #[error("linear solve failed: {0}")]
    Solver(String),

    #[error("prescribed gradient is not integrable: residual {residual:.3e} exceeds threshold {threshold:.3e}")]
    Inconsistent { residual: f64, threshold: f64 },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("unsupported tensor order {0}")]
    UnsupportedOrder(usize),

    #[error("non-finite value at node {node} ({x1:.4}, {x2:.4})")]
    NonFinite { node: usize, x1: f64, x2: f64 },

    #[error("constraint violated: skew defect {defect:.3e} above tolerance {tolerance:.3e}")]
    ConstraintViolation { defect: f64, tolerance: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
