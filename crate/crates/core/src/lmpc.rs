//! Iteration loop: multi-modal controller and the single-set baseline.
//!
//! The multi-modal controller keeps one [`ModeStore`] per mode. Each
//! iteration it asks the bandit for a mode, runs a closed-loop rollout
//! against that mode's frozen safe set, classifies the realized trajectory
//! and records it to the classified mode only. The baseline runs the same
//! solver against the union of everything seen so far.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bandit::{iteration_cost_bound, BanditState};
use crate::clustering::{Classifier, ClassifierPolicy, ModeLabel};
use crate::error::{Error, Result};
use crate::model::{SystemSpec, Trajectory};
use crate::safe_set::{ModeStore, SampledSafeSet};
use crate::solver::{receding_horizon_rollout, SolverConfig, Telemetry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Mm,
    Baseline,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Mm => "mm",
            Algorithm::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub spec: SystemSpec,
    pub solver: SolverConfig,
    pub kappa: f64,
    pub classifier: ClassifierPolicy,
    pub iterations: usize,
    /// Closed-loop steps allowed per rollout.
    pub step_cap: usize,
}

impl RunConfig {
    pub fn new(spec: SystemSpec) -> Self {
        Self {
            spec,
            solver: SolverConfig::default(),
            kappa: 5.0,
            classifier: ClassifierPolicy::Side,
            iterations: 20,
            step_cap: 200,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.solver.validate()?;
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::Config(format!("kappa must be positive, got {}", self.kappa)));
        }
        if self.step_cap == 0 {
            return Err(Error::Config("step_cap must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-mode `(best, n)` at some point of the run.
pub type ModeStats = BTreeMap<ModeLabel, (u32, usize)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub j: usize,
    /// `None` for the baseline, which has no selection step.
    pub selected_mode: Option<ModeLabel>,
    pub classified_mode: ModeLabel,
    pub cost: u32,
    /// Statistics the selection was made from.
    pub prior: ModeStats,
    /// Statistics after recording this iteration.
    pub posterior: ModeStats,
    pub lcb_scores: Vec<(ModeLabel, f64)>,
    /// Objective of the first horizon problem of the rollout.
    pub initial_objective: u32,
    pub telemetry: Telemetry,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub algorithm: Algorithm,
    pub kappa: f64,
    pub seeds: Vec<(ModeLabel, Trajectory)>,
    pub iterations: Vec<IterationLog>,
    /// Realized trajectory of every iteration, in order.
    pub rollouts: Vec<Trajectory>,
    pub stores: Vec<ModeStore>,
}

impl RunResult {
    pub fn best_overall(&self) -> Option<(ModeLabel, &Trajectory)> {
        self.stores
            .iter()
            .filter_map(|s| s.best_trajectory().map(|t| (s.mode, t)))
            .min_by_key(|(m, t)| (t.cost, *m))
    }

    pub fn final_cost(&self) -> Option<u32> {
        self.best_overall().map(|(_, t)| t.cost)
    }

    pub fn store(&self, m: ModeLabel) -> Option<&ModeStore> {
        self.stores.iter().find(|s| s.mode == m)
    }

    pub fn mode_stats(&self) -> ModeStats {
        stats_of(&self.stores)
    }
}

fn stats_of(stores: &[ModeStore]) -> ModeStats {
    stores
        .iter()
        .filter_map(|s| s.best().map(|b| (s.mode, (b, s.n()))))
        .collect()
}

fn store_mut(stores: &mut Vec<ModeStore>, m: ModeLabel) -> &mut ModeStore {
    let idx = match stores.iter().position(|s| s.mode == m) {
        Some(i) => i,
        None => {
            stores.push(ModeStore::new(m));
            stores.sort_by_key(|s| s.mode);
            stores.iter().position(|s| s.mode == m).unwrap()
        }
    };
    &mut stores[idx]
}

/// Learning state shared by both algorithms between iterations.
#[derive(Debug, Clone)]
pub struct Learner {
    pub stores: Vec<ModeStore>,
    pub bandit: BanditState,
    pub classifier: Classifier,
    pub seeds: Vec<(ModeLabel, Trajectory)>,
}

/// Validates and classifies the seeds, then builds one store per label.
pub fn initialize_from_seeds(seeds: &[Trajectory], cfg: &RunConfig) -> Result<Learner> {
    if seeds.is_empty() {
        return Err(Error::NoSeeds);
    }
    for (index, s) in seeds.iter().enumerate() {
        let reason = match s.validate(&cfg.spec) {
            Err(e) => Some(e.to_string()),
            Ok(()) if !s.reaches_goal(&cfg.spec) => Some("does not end at the goal".into()),
            Ok(()) => None,
        };
        if let Some(reason) = reason {
            return Err(Error::InvalidSeed { index, reason });
        }
    }
    let mut classifier = Classifier::new(cfg.classifier, cfg.spec.obstacle);
    let labels = classifier.fit(seeds);
    let mut stores = Vec::new();
    let mut bandit = BanditState::new(cfg.kappa);
    for (s, &m) in seeds.iter().zip(&labels) {
        store_mut(&mut stores, m).record(s.clone(), &cfg.spec)?;
        bandit.record_outcome(m, s.cost);
    }
    Ok(Learner {
        stores,
        bandit,
        classifier,
        seeds: labels.into_iter().zip(seeds.iter().cloned()).collect(),
    })
}

impl Learner {
    pub fn mode_count(&self) -> usize {
        self.stores.len()
    }

    pub fn store(&self, m: ModeLabel) -> Option<&ModeStore> {
        self.stores.iter().find(|s| s.mode == m)
    }

    /// One multi-modal iteration.
    pub fn run_iteration(&mut self, j: usize, cfg: &RunConfig) -> Result<(IterationLog, Trajectory)> {
        let prior = stats_of(&self.stores);
        let lcb_scores = self.bandit.lcb_scores()?;
        let selected = self.bandit.select_mode()?;
        let ss = &self.store(selected).ok_or(Error::NoModes)?.safe_set;
        let rollout = receding_horizon_rollout(&cfg.spec.start, ss, &cfg.spec, &cfg.solver, cfg.step_cap)?;
        self.finish(j, Some(selected), prior, lcb_scores, rollout, cfg)
    }

    /// One baseline iteration against `pooled`, which the caller keeps
    /// equal to the union of all stores.
    fn run_baseline_iteration(
        &mut self,
        j: usize,
        pooled: &SampledSafeSet,
        cfg: &RunConfig,
    ) -> Result<(IterationLog, Trajectory)> {
        let prior = stats_of(&self.stores);
        let rollout = receding_horizon_rollout(&cfg.spec.start, pooled, &cfg.spec, &cfg.solver, cfg.step_cap)?;
        self.finish(j, None, prior, Vec::new(), rollout, cfg)
    }

    fn finish(
        &mut self,
        j: usize,
        selected: Option<ModeLabel>,
        prior: ModeStats,
        lcb_scores: Vec<(ModeLabel, f64)>,
        rollout: crate::solver::Rollout,
        cfg: &RunConfig,
    ) -> Result<(IterationLog, Trajectory)> {
        let traj = rollout.trajectory;
        let classified = self.classifier.assign(&traj);
        store_mut(&mut self.stores, classified).record(traj.clone(), &cfg.spec)?;
        self.bandit.record_outcome(classified, traj.cost);
        let log = IterationLog {
            j,
            selected_mode: selected,
            classified_mode: classified,
            cost: traj.cost,
            prior,
            posterior: stats_of(&self.stores),
            lcb_scores,
            initial_objective: rollout.initial_objective.unwrap_or(0),
            telemetry: rollout.telemetry,
        };
        Ok((log, traj))
    }

    fn into_result(self, algorithm: Algorithm, iterations: Vec<IterationLog>, rollouts: Vec<Trajectory>) -> RunResult {
        RunResult {
            algorithm,
            kappa: self.bandit.kappa(),
            seeds: self.seeds,
            iterations,
            rollouts,
            stores: self.stores,
        }
    }
}

/// Multi-modal LMPC for `cfg.iterations` iterations.
pub fn run(seeds: &[Trajectory], cfg: &RunConfig) -> Result<RunResult> {
    run_observed(seeds, cfg, |_| {})
}

/// Like [`run`], calling `observe` after every iteration.
pub fn run_observed(seeds: &[Trajectory], cfg: &RunConfig, mut observe: impl FnMut(&IterationLog)) -> Result<RunResult> {
    cfg.validate()?;
    let mut learner = initialize_from_seeds(seeds, cfg)?;
    let mut logs = Vec::with_capacity(cfg.iterations);
    let mut rollouts = Vec::with_capacity(cfg.iterations);
    for j in 1..=cfg.iterations {
        let (log, traj) = learner.run_iteration(j, cfg)?;
        observe(&log);
        logs.push(log);
        rollouts.push(traj);
    }
    Ok(learner.into_result(Algorithm::Mm, logs, rollouts))
}

/// Standard LMPC over one pooled safe set.
pub fn run_baseline(seeds: &[Trajectory], cfg: &RunConfig) -> Result<RunResult> {
    run_baseline_observed(seeds, cfg, |_| {})
}

pub fn run_baseline_observed(
    seeds: &[Trajectory],
    cfg: &RunConfig,
    mut observe: impl FnMut(&IterationLog),
) -> Result<RunResult> {
    cfg.validate()?;
    let mut learner = initialize_from_seeds(seeds, cfg)?;
    let mut pooled = crate::safe_set::pooled_union(&learner.stores);
    let mut logs = Vec::with_capacity(cfg.iterations);
    let mut rollouts = Vec::with_capacity(cfg.iterations);
    for j in 1..=cfg.iterations {
        let (log, traj) = learner.run_baseline_iteration(j, &pooled, cfg)?;
        pooled.insert_trajectory(&traj, &cfg.spec)?;
        observe(&log);
        logs.push(log);
        rollouts.push(traj);
    }
    Ok(learner.into_result(Algorithm::Baseline, logs, rollouts))
}

/// Runs either algorithm.
pub fn run_algorithm(algorithm: Algorithm, seeds: &[Trajectory], cfg: &RunConfig) -> Result<RunResult> {
    match algorithm {
        Algorithm::Mm => run(seeds, cfg),
        Algorithm::Baseline => run_baseline(seeds, cfg),
    }
}

/// Checks the per-iteration cost bound on a multi-modal log row. Returns
/// the bound and whether the realized cost respects it.
pub fn check_cost_bound(log: &IterationLog, kappa: f64) -> Option<(f64, bool)> {
    let selected = log.selected_mode?;
    let bound = iteration_cost_bound(kappa, &log.prior, selected)?;
    Some((bound, f64::from(log.cost) <= bound + 1e-9))
}

/// Iterations at which a mode's cost went up relative to its previous
/// recorded execution (seeds included).
pub fn monotonicity_violations(result: &RunResult) -> Vec<(ModeLabel, usize)> {
    let mut last: BTreeMap<ModeLabel, u32> = BTreeMap::new();
    for (m, s) in &result.seeds {
        let e = last.entry(*m).or_insert(s.cost);
        *e = (*e).min(s.cost);
    }
    let mut out = Vec::new();
    for log in &result.iterations {
        if let Some(&prev) = last.get(&log.classified_mode) {
            if log.cost > prev {
                out.push((log.classified_mode, log.j));
            }
        }
        last.insert(log.classified_mode, log.cost);
    }
    out
}

/// Recomputes every mode's cost-to-go table directly from the recorded
/// trajectories and compares it with the stored one.
pub fn safe_set_mismatches(stores: &[ModeStore], spec: &SystemSpec) -> usize {
    stores
        .iter()
        .map(|s| {
            let mut expect: BTreeMap<_, u32> = BTreeMap::new();
            for t in &s.trajectories {
                for k in 0..t.states.len() {
                    let c: u32 = t.states[k..].iter().map(|x| spec.stage_cost(x)).sum();
                    let e = expect.entry(t.states[k].key()).or_insert(c);
                    *e = (*e).min(c);
                }
            }
            let got: BTreeMap<_, _> = s.safe_set.cost_table().into_iter().collect();
            let missing = expect
                .iter()
                .filter(|(k, c)| s.safe_set.get_key(k).map(|e| e.cost_to_go) != Some(**c))
                .count();
            missing + got.len().abs_diff(expect.len())
        })
        .sum()
}
