use thiserror::Error;

/// Errors raised anywhere in the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("argument outside function domain: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("linear system is singular; last ridge tried = {ridge:e}")]
    Singular { ridge: f64 },

    #[error("jump sampler aborted after {rejections} consecutive rejections at delta = {delta}")]
    SamplerAbort { rejections: u64, delta: f64 },

    #[error("non-finite state on path {path} at step {step}")]
    NonFiniteState { path: usize, step: usize },

    #[error("non-finite regression target at sample {index}")]
    NonFiniteTarget { index: usize },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("training diverged at time step {step}, epoch {epoch}: loss = {loss:e}")]
    Divergence { step: usize, epoch: usize, loss: f64 },

    #[error("wrong model: {0}")]
    WrongModel(String),

    #[error("index {index} out of range 0..={max}")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error("no feasible value: {0}")]
    Infeasible(String),

    #[error("projected cost {projected:e} coefficient evaluations exceeds budget {limit:e}")]
    BudgetExceeded { projected: f64, limit: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
