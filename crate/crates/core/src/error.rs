use thiserror::Error;

/// Errors raised by the solvers and their input validation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("functions live on different grids or spaces")]
    SpaceMismatch,

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid energy: {0}")]
    InvalidEnergy(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("resolvent bracket failure at z = {z} (tau = {tau})")]
    BracketFailure { z: f64, tau: f64 },

    #[error("implicit step is not strongly convex: tau * omega = {product} >= 1")]
    NonconvexSubproblem { product: f64 },

    #[error("solver did not converge in {iterations} iterations (residual {residual:e})")]
    MaxIterations { iterations: usize, residual: f64 },

    #[error("time step {index}: {source}")]
    Step {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("energy is infinite at time index {index}")]
    InfiniteEnergy { index: usize },

    #[error("trajectory has no time steps")]
    EmptyTrajectory,

    #[error("time mesh or energy mismatch: {0}")]
    MeshMismatch(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
