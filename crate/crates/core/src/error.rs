use thiserror::Error;

/// Errors raised across the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("series of length {len} is too short for a derivative of order {order}")]
    SeriesTooShort { len: usize, order: usize },

    #[error("unsupported derivative order {0} (expected 1, 2 or 3)")]
    UnsupportedOrder(usize),

    #[error("unknown norm `{0}`")]
    UnknownNorm(String),

    #[error("invalid coefficients: {0}")]
    InvalidCoefficients(String),

    #[error("invalid initial data: {0}")]
    InvalidInitialData(String),

    #[error("singular step matrix detected at time step {step}")]
    SingularStep { step: usize },

    #[error("non-finite state produced at time step {step}")]
    NonFiniteState { step: usize },

    #[error("time level {index} out of range (grid has {len} levels)")]
    LevelOutOfRange { index: usize, len: usize },

    #[error("inadmissible Carleman setup: {0}")]
    Inadmissible(String),

    #[error(
        "Carleman weight overflow: max log_weight = {max_log_weight:.6e} exceeds {limit}; lower s or lambda"
    )]
    WeightOverflow { max_log_weight: f64, limit: f64 },

    #[error("observation set Gamma_0 is empty")]
    EmptyObservation,

    #[error("boundary point mismatch between trace series")]
    BoundaryMismatch,

    #[error("noise level must be non-negative, got {0}")]
    NegativeNoise(f64),

    #[error("conjugate gradient stopped after {iterations} iterations at relative residual {residual:.3e}")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("normal matrix is not positive definite (pivot {pivot} at unknown {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("|u2| = {value:.3e} at node {node} is below the positivity floor eta = {eta:.3e}")]
    PositivityViolated { node: usize, value: f64, eta: f64 },

    #[error("iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::ShapeMismatch {
            what,
            expected,
            got,
        })
    }
}
