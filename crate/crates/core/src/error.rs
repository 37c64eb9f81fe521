use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("input contains non-finite entries")]
    NonFiniteInput,

    #[error("generator is undefined at this point: {0}")]
    Domain(String),

    #[error("generator returned non-finite values")]
    NonFiniteValue,

    #[error("jacobian has shape {rows}x{cols}, expected {expected_rows}x{expected_cols}")]
    JacobianShape {
        rows: usize,
        cols: usize,
        expected_rows: usize,
        expected_cols: usize,
    },

    #[error("finite-difference step must be positive, got {0}")]
    StepUnderflow(f64),

    #[error("invalid weight matrix: {0}")]
    InvalidWeightMatrix(String),

    #[error("invalid generator: {0}")]
    InvalidGenerator(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("iterate became non-finite at iteration {iteration}")]
    NonFiniteIterate { iteration: usize },

    #[error("no chain was accepted out of {attempts} (smallest residual {best_residual:e})")]
    NoAcceptedPoints {
        attempts: usize,
        best_residual: f64,
        residuals: Vec<f64>,
    },

    #[error("trace has {usable} usable entries above the floor, need at least {required}")]
    InsufficientTrace { usable: usize, required: usize },

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("jacobian is rank deficient (smallest singular value {0:e})")]
    RankDeficient(f64),

    #[error("constrained maximization did not converge after {outer_iters} outer iterations: {reason}")]
    NotConverged { outer_iters: usize, reason: String },

    #[error("none of the {0} starts converged")]
    NoConvergedRuns(usize),

    #[error("bandwidth must be positive, got {0}")]
    NonPositiveBandwidth(f64),

    #[error("point cloud has zero spread")]
    DegenerateCloud,

    #[error("non-finite posterior score at point {index}")]
    NonFiniteScore { index: usize },

    #[error("invalid model parameters: {0}")]
    InvalidParameters(String),

    #[error("invalid cell targets: {0}")]
    InvalidTargets(String),

    #[error("invalid probability table: {0}")]
    InvalidTable(String),

    #[error("invalid moment specification: {0}")]
    InvalidSpec(String),

    #[error("eigen-decomposition failed: {0}")]
    EigenFailure(String),

    #[error("objective gradient disagrees with finite differences at probe {index} (relative error {rel_error:e})")]
    GradientMismatch { index: usize, rel_error: f64 },
}
