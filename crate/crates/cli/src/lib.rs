//! Scenario runner for the `semiflow` command line tool.
//!
//! Exit codes: 0 all estimates pass, 1 an estimate fails, 2 configuration
//! error, 3 solver failure.

pub mod output;
pub mod runner;
pub mod scenario;
pub mod verify;

pub use output::DumpStates;
pub use runner::{run_scenario, Outcome, RunOptions};
pub use scenario::{Expectation, Kind, Scenario};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) | CliError::Io(_) => 3,
        }
    }
}

fn is_config(e: &semiflow::Error) -> bool {
    use semiflow::Error::*;
    match e {
        InvalidGrid(_) | InvalidEnergy(_) | InvalidInput(_) | Unsupported(_) | MeshMismatch(_) | SpaceMismatch
        | NonconvexSubproblem { .. } => true,
        BracketFailure { .. } | MaxIterations { .. } | InfiniteEnergy { .. } | EmptyTrajectory => false,
        Step { source, .. } => is_config(source),
    }
}

impl From<semiflow::Error> for CliError {
    fn from(e: semiflow::Error) -> Self {
        if is_config(&e) {
            CliError::Config(e.to_string())
        } else {
            CliError::Solver(e.to_string())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_classes() {
        let step = semiflow::Error::Step {
            index: 3,
            source: Box::new(semiflow::Error::MaxIterations { iterations: 5, residual: 1.0 }),
        };
        assert_eq!(CliError::from(step).exit_code(), 3);
        let e = semiflow::Error::NonconvexSubproblem { product: 2.0 };
        assert_eq!(CliError::from(e).exit_code(), 2);
    }
}
