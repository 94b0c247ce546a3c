//! Learning model predictive control that keeps a separate sampled safe set
//! per homotopy class of trajectory and picks which class to refine with a
//! lower-confidence-bound bandit.

pub mod bandit;
pub mod clustering;
pub mod error;
pub mod experiment;
pub mod lmpc;
pub mod model;
pub mod safe_set;
pub mod solver;

pub use bandit::BanditState;
pub use clustering::{Classifier, ClassifierPolicy, ModeLabel};
pub use error::{Error, Result};
pub use model::{Input, ObstacleEllipse, State, SystemSpec, Trajectory};
pub use safe_set::{CostToGo, ModeStore, SampledSafeSet};
pub use solver::{solve_lmpc_step, HorizonSolution, SolverConfig};

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/introduction.md")]
mod book_introduction {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/model.md")]
mod book_model {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/safe-sets.md")]
mod book_safe_sets {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/solver.md")]
mod book_solver {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/modes.md")]
mod book_modes {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/lattice.md")]
mod book_lattice {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/experiments.md")]
mod book_experiments {}
