use thiserror::Error;

/// Errors raised by the solver pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid mesh spec: {0}")]
    MeshSpec(String),

    #[error("invalid model parameters: {0}")]
    Params(String),

    #[error("invalid stepper config: {0}")]
    StepperConfig(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("conjugate gradients did not converge: {iterations} iterations, relative residual {residual:e}")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("boundary data not finite at ({x}, {y}), t = {t}")]
    BoundaryEval { x: f64, y: f64, t: f64 },

    #[error("non-finite {field} at node {node}, t = {t}")]
    NonFinite {
        field: &'static str,
        node: usize,
        t: f64,
    },

    #[error("step {step} (t = {t}) failed: {source}")]
    Step {
        step: usize,
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("time {t} outside [0, {t_end}]")]
    TimeRange { t: f64, t_end: f64 },

    #[error("non-uniform time spacing at frame {frame}: dt = {dt}, expected {expected}")]
    NonUniform { frame: usize, dt: f64, expected: f64 },

    #[error("trajectory mismatch: {0}")]
    Trajectory(String),

    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("perturbation study failed at rung {rung} (scale {scale}): {source}")]
    Rung {
        rung: usize,
        scale: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid perturbation spec: {0}")]
    Perturbation(String),
}

pub type Result<T> = std::result::Result<T, Error>;
