//! Experiment plumbing: configuration, seed generation, the synthetic
//! bandit harness, run logs and plots.

pub mod config;
pub mod logs;
pub mod plots;
pub mod seeds;
pub mod synthetic;

pub use config::{AlgorithmChoice, ExperimentConfig};
pub use seeds::{generate_seed_trajectories, SeedPair};
pub use synthetic::{synthetic_bandit_benchmark, SyntheticConfig, SyntheticReport};
