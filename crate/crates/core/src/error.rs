use std::path::PathBuf;

use thiserror::Error;

use crate::model::State;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid system spec: {0}")]
    InvalidSpec(String),

    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),

    #[error("trajectory does not end at the goal (last state {0:?})")]
    TrajectoryNotAtGoal(State),

    #[error("safe set is empty, no terminal candidates")]
    NoCandidates,

    #[error("no feasible horizon solution from {state:?} at step {step}")]
    SolverInfeasible { state: State, step: usize },

    #[error("rollout did not reach the goal within {0} steps")]
    Diverged(usize),

    #[error("goal unreachable on the configured lattice: {0}")]
    Unreachable(String),

    #[error("seed {index} rejected: {reason}")]
    InvalidSeed { index: usize, reason: String },

    #[error("no seed trajectories supplied")]
    NoSeeds,

    #[error("no modes available")]
    NoModes,

    #[error("invalid config: {0}")]
    Config(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Errors caused by bad user input rather than by the controller.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Parse { .. } | Error::InvalidSpec(_) | Error::Io { .. }
        )
    }
}
