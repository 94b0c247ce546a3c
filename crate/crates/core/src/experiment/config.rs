//! TOML experiment configuration.
//!
//! Every block must be present and unknown keys are rejected, so a config
//! file fully pins an experiment. Field names are listed in the README.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::clustering::ClassifierPolicy;
use crate::error::{Error, Result};
use crate::lmpc::{Algorithm, RunConfig};
use crate::model::SystemSpec;
use crate::solver::dp::Lattice;
use crate::solver::SolverConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmChoice {
    Mm,
    Baseline,
    Both,
}

impl AlgorithmChoice {
    pub fn algorithms(self) -> &'static [Algorithm] {
        match self {
            AlgorithmChoice::Mm => &[Algorithm::Mm],
            AlgorithmChoice::Baseline => &[Algorithm::Baseline],
            AlgorithmChoice::Both => &[Algorithm::Mm, Algorithm::Baseline],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BanditBlock {
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    pub iterations: usize,
    pub algorithm: AlgorithmChoice,
    pub out: PathBuf,
    #[serde(default)]
    pub plot: bool,
    #[serde(default)]
    pub verbose: bool,
    #[serde(default = "default_step_cap")]
    pub step_cap: usize,
}

fn default_step_cap() -> usize {
    200
}

/// Lattice restrictions for one seed. The seed is the lattice-optimal path
/// on its side of the obstacle when the speed is capped at `v_max` and the
/// crossing keeps `clearance` from the obstacle edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedSide {
    pub v_max: f64,
    #[serde(default)]
    pub clearance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedsBlock {
    pub above: SeedSide,
    pub below: SeedSide,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSpec,
    pub solver: SolverConfig,
    pub bandit: BanditBlock,
    pub classifier: ClassifierPolicy,
    pub run: RunBlock,
    pub lattice: Lattice,
    pub seeds: SeedsBlock,
}

/// The obstacle benchmark as shipped in `configs/bench.toml`.
pub const BENCH_TOML: &str = include_str!("../../../../configs/bench.toml");

impl ExperimentConfig {
    pub fn benchmark() -> Self {
        Self::from_toml_str(BENCH_TOML, Path::new("configs/bench.toml")).expect("bundled config parses")
    }

    /// Parses and validates; `origin` only labels error messages.
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.run_config().validate()?;
        for (name, s) in [("above", self.seeds.above), ("below", self.seeds.below)] {
            if !(s.v_max > 0.0) || !(s.clearance >= 0.0) {
                return Err(Error::Config(format!(
                    "seeds.{name}: v_max must be positive and clearance nonnegative"
                )));
            }
        }
        Ok(())
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            spec: self.system.clone(),
            solver: self.solver,
            kappa: self.bandit.kappa,
            classifier: self.classifier,
            iterations: self.run.iterations,
            step_cap: self.run.step_cap,
        }
    }
}
