//! Brute-force seed trajectories, one per side of the obstacle.

use std::path::Path;

use crate::error::{Error, Result};
use crate::experiment::config::{SeedSide, SeedsBlock};
use crate::experiment::logs::{read_trajectory_csv, write_trajectory_csv};
use crate::model::{SystemSpec, Trajectory};
use crate::solver::dp::{DpOracle, Lattice, Side};

#[derive(Debug, Clone, PartialEq)]
pub struct SeedPair {
    pub above: Trajectory,
    pub below: Trajectory,
}

impl SeedPair {
    pub fn to_vec(&self) -> Vec<Trajectory> {
        vec![self.above.clone(), self.below.clone()]
    }

    /// Writes `above.csv` and `below.csv` into `dir`.
    pub fn persist(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_trajectory_csv(&self.above, &dir.join("above.csv"))?;
        write_trajectory_csv(&self.below, &dir.join("below.csv"))
    }

    /// Reloads a persisted pair, replaying the stored inputs.
    pub fn load(dir: &Path, spec: &SystemSpec) -> Result<Self> {
        Ok(Self {
            above: read_trajectory_csv(&dir.join("above.csv"), spec)?,
            below: read_trajectory_csv(&dir.join("below.csv"), spec)?,
        })
    }
}

/// Lattice-optimal path from the start on one side of the obstacle.
pub fn side_optimal(spec: &SystemSpec, lattice: &Lattice, side: Side, v_max: f64) -> Result<Trajectory> {
    let lattice = Lattice {
        v_max: v_max.min(lattice.v_max),
        ..lattice.clone()
    };
    let dp = DpOracle::solve(spec, &lattice, side)?;
    dp.optimal_path(&spec.start)
}

pub fn generate_seed_trajectories(spec: &SystemSpec, lattice: &Lattice, seeds: &SeedsBlock) -> Result<SeedPair> {
    let one = |s: SeedSide, side: Side| side_optimal(spec, lattice, side, s.v_max);
    Ok(SeedPair {
        above: one(seeds.above, Side::Above { clearance: seeds.above.clearance })?,
        below: one(seeds.below, Side::Below { clearance: seeds.below.clearance })?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::{classify_side, ModeLabel};
    use crate::experiment::config::ExperimentConfig;
    use crate::model::ObstacleEllipse;
    use crate::safe_set::SampledSafeSet;

    #[test]
    fn bench_seeds_are_valid_and_on_their_sides() {
        let cfg = ExperimentConfig::benchmark();
        let pair = generate_seed_trajectories(&cfg.system, &cfg.lattice, &cfg.seeds).unwrap();
        for (t, m) in [(&pair.above, ModeLabel::ABOVE), (&pair.below, ModeLabel::BELOW)] {
            t.validate(&cfg.system).unwrap();
            assert_eq!(classify_side(t, &cfg.system.obstacle), m);
            SampledSafeSet::new().insert_trajectory(t, &cfg.system).unwrap();
        }
        assert!(pair.above.cost < pair.below.cost);
    }

    #[test]
    fn vanishing_obstacle_gives_symmetric_seeds() {
        let mut spec = SystemSpec::benchmark();
        spec.obstacle = ObstacleEllipse::new(27.0, 0.0, 1e-3, 1e-3).unwrap();
        let lattice = Lattice::default();
        let mut open = spec.clone();
        open.obstacle = ObstacleEllipse::new(27.0, 200.0, 1.0, 1.0).unwrap();
        let free = DpOracle::solve(&open, &lattice, Side::Any).unwrap().value(&open.start).unwrap();
        let s = SeedSide { v_max: 8.0, clearance: 0.0 };
        let pair = generate_seed_trajectories(&spec, &lattice, &SeedsBlock { above: s, below: s }).unwrap();
        assert!(pair.above.cost >= free && pair.below.cost >= free);
        assert_eq!(pair.above.cost, pair.below.cost);
    }

    #[test]
    fn single_heading_lattice_is_unreachable() {
        let spec = SystemSpec::benchmark();
        let lattice = Lattice { headings: 1, ..Lattice::default() };
        let s = SeedSide { v_max: 8.0, clearance: 0.0 };
        let err = generate_seed_trajectories(&spec, &lattice, &SeedsBlock { above: s, below: s }).unwrap_err();
        assert!(matches!(err, Error::Unreachable(_)));
        assert!(err.to_string().contains("finer lattice"));
    }

    #[test]
    fn persisted_seeds_reload() {
        let cfg = ExperimentConfig::benchmark();
        let pair = generate_seed_trajectories(&cfg.system, &cfg.lattice, &cfg.seeds).unwrap();
        let dir = tempfile::tempdir().unwrap();
        pair.persist(dir.path()).unwrap();
        assert_eq!(SeedPair::load(dir.path(), &cfg.system).unwrap(), pair);
    }
}
