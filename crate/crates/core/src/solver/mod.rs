//! Finite-horizon LMPC problem and the receding-horizon loop.
//!
//! At each step the planner minimises
//! `sum of stage costs over the horizon + Q(terminal state)` subject to the
//! terminal state being a stored safe-set state. Because the stage cost is
//! an indicator, every plan that does not reach the goal inside the horizon
//! costs exactly `N + Q(terminal)`, so the problem reduces to finding the
//! cheapest terminal candidate that the car can be steered onto in `N`
//! steps. Plans reaching the goal after `k <= N` steps cost `k` and always
//! win.
//!
//! Besides the searched candidates, two structural candidates are always
//! considered: the stored tail of a recorded trajectory when the current
//! state is itself a stored state, and the previous step's plan shifted by
//! one step and extended along the stored successor of its terminal state.
//! Either one is a feasible plan whenever the previous step was, which is
//! what keeps the loop recursively feasible.

pub mod dp;
pub mod reach;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{step_dynamics, Input, State, SystemSpec, Trajectory};
use crate::safe_set::{SafeSetEntry, SampledSafeSet};

pub use reach::{reach_candidate, ReachStats, MATCH_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Prediction horizon `N`.
    pub horizon: usize,
    pub theta_grid: usize,
    pub a_grid: usize,
    pub refine_rounds: usize,
    /// Maximum number of searched terminal candidates per step.
    pub candidate_limit: usize,
    pub beam_width: usize,
    /// Candidates searched concurrently per batch.
    pub batch: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            horizon: 6,
            theta_grid: 25,
            a_grid: 9,
            refine_rounds: 3,
            candidate_limit: 64,
            beam_width: 24,
            batch: 8,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1
            || self.theta_grid < 2
            || self.a_grid < 2
            || self.candidate_limit < 1
            || self.beam_width < 1
            || self.batch < 1
        {
            return Err(Error::Config(format!(
                "solver: horizon, candidate_limit, beam_width and batch must be >= 1 and grids >= 2 ({self:?})"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Terminal {
    /// The goal is reached after `steps` steps and held afterwards.
    Goal { steps: usize },
    Entry(SafeSetEntry),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonSolution {
    pub inputs: Vec<Input>,
    pub predicted_states: Vec<State>,
    pub terminal: Terminal,
    pub objective: u32,
}

impl HorizonSolution {
    /// Terminal cost-to-go; zero when the goal is reached in the horizon.
    pub fn terminal_cost(&self) -> u32 {
        match &self.terminal {
            Terminal::Goal { .. } => 0,
            Terminal::Entry(e) => e.cost_to_go,
        }
    }
}

/// Where a solution came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    StoredTail,
    Shifted,
    GoalSearch,
    CandidateSearch,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Telemetry {
    pub steps: usize,
    pub candidates_examined: usize,
    pub beam_nodes: usize,
    pub closures: usize,
    pub refine_steps: usize,
    pub refine_gain: f64,
    /// Steps whose applied plan was the shifted or stored-tail candidate.
    pub structural_wins: usize,
}

impl Telemetry {
    fn absorb_reach(&mut self, r: &ReachStats) {
        self.beam_nodes += r.beam_nodes;
        self.closures += r.closures;
        self.refine_steps += r.refine_steps;
        self.refine_gain += r.refine_gain;
    }

    pub fn absorb(&mut self, o: &Telemetry) {
        self.steps += o.steps;
        self.candidates_examined += o.candidates_examined;
        self.beam_nodes += o.beam_nodes;
        self.closures += o.closures;
        self.refine_steps += o.refine_steps;
        self.refine_gain += o.refine_gain;
        self.structural_wins += o.structural_wins;
    }
}

/// Planner bound to one frozen safe set.
pub struct Planner<'a> {
    ss: &'a SampledSafeSet,
    spec: &'a SystemSpec,
    cfg: &'a SolverConfig,
    /// Non-goal entries in ascending cost-to-go order.
    candidates: Vec<&'a SafeSetEntry>,
}

impl<'a> Planner<'a> {
    pub fn new(ss: &'a SampledSafeSet, spec: &'a SystemSpec, cfg: &'a SolverConfig) -> Result<Self> {
        let candidates = ss
            .terminal_candidates()?
            .into_iter()
            .filter(|e| !spec.is_goal(&e.state))
            .collect();
        Ok(Self {
            ss,
            spec,
            cfg,
            candidates,
        })
    }

    /// Simulates `inputs` from `x` and turns the result into a solution if
    /// every input and state is feasible and the plan either reaches the
    /// goal or ends on `terminal`.
    fn evaluate(&self, x: &State, inputs: Vec<Input>, terminal: Option<&SafeSetEntry>) -> Option<HorizonSolution> {
        let n = self.cfg.horizon;
        debug_assert_eq!(inputs.len(), n);
        let mut states = Vec::with_capacity(n + 1);
        states.push(*x);
        let mut cur = *x;
        let mut goal_at = self.spec.is_goal(x).then_some(0);
        for u in &inputs {
            if !self.spec.check_input(u) {
                return None;
            }
            cur = step_dynamics(&cur, u);
            if !self.spec.check_state(&cur) {
                return None;
            }
            states.push(cur);
            if goal_at.is_none() && self.spec.is_goal(&cur) {
                goal_at = Some(states.len() - 1);
            }
        }
        if let Some(k) = goal_at {
            if states[k..].iter().all(|s| self.spec.is_goal(s)) {
                return Some(HorizonSolution {
                    inputs,
                    predicted_states: states,
                    terminal: Terminal::Goal { steps: k },
                    objective: k as u32,
                });
            }
        }
        let entry = terminal?;
        if cur.max_abs_diff(&entry.state) > MATCH_TOL {
            return None;
        }
        Some(HorizonSolution {
            inputs,
            predicted_states: states,
            objective: n as u32 + entry.cost_to_go,
            terminal: Terminal::Entry(entry.clone()),
        })
    }

    /// Goal-reaching plan of `k` steps padded with zero inputs.
    fn goal_plan(&self, x: &State, k: usize, stats: &mut ReachStats) -> Option<HorizonSolution> {
        let plan = reach::reach(x, &self.spec.goal, k, self.spec, self.cfg, stats)?;
        let mut inputs = plan.inputs;
        inputs.resize(self.cfg.horizon, Input::ZERO);
        self.evaluate(x, inputs, None)
    }

    fn candidate_plan(&self, x: &State, entry: &SafeSetEntry, stats: &mut ReachStats) -> Option<HorizonSolution> {
        let plan = reach::reach(x, &entry.state, self.cfg.horizon, self.spec, self.cfg, stats)?;
        match self.evaluate(x, plan.inputs, Some(entry)) {
            // reaching the goal early means the goal branch had an answer
            Some(sol) if matches!(sol.terminal, Terminal::Entry(_)) => Some(sol),
            _ => None,
        }
    }

    /// Follows stored successors from the entry matching `x`.
    fn stored_tail(&self, x: &State) -> Option<HorizonSolution> {
        let mut entry = self.ss.find_near(x, MATCH_TOL)?;
        let mut inputs = Vec::with_capacity(self.cfg.horizon);
        while inputs.len() < self.cfg.horizon {
            if self.spec.is_goal(&entry.state) {
                inputs.push(Input::ZERO);
                continue;
            }
            let (u, next) = self.ss.successor_of(entry)?;
            inputs.push(u);
            entry = next;
        }
        self.evaluate(x, inputs, Some(entry))
    }

    /// Previous plan advanced one step and extended along the stored
    /// successor of its terminal state.
    fn shifted(&self, x: &State, prev: &HorizonSolution) -> Option<HorizonSolution> {
        let mut inputs = prev.inputs[1..].to_vec();
        match &prev.terminal {
            Terminal::Goal { .. } => {
                inputs.push(Input::ZERO);
                self.evaluate(x, inputs, None)
            }
            Terminal::Entry(e) => {
                let stored = self.ss.get(&e.state)?;
                let (u, next) = self.ss.successor_of(stored)?;
                inputs.push(u);
                self.evaluate(x, inputs, Some(next))
            }
        }
    }

    /// Solves the horizon problem at `x`, optionally warm-started with the
    /// plan applied at the previous step.
    pub fn solve(
        &self,
        x: &State,
        prev: Option<&HorizonSolution>,
        telemetry: &mut Telemetry,
    ) -> Result<(HorizonSolution, Origin)> {
        telemetry.steps += 1;
        let n = self.cfg.horizon;

        let mut incumbent: Option<(HorizonSolution, Origin)> = None;
        let offer = |sol: Option<HorizonSolution>, origin: Origin, inc: &mut Option<(HorizonSolution, Origin)>| {
            if let Some(sol) = sol {
                let better = inc.as_ref().is_none_or(|(b, _)| {
                    (sol.objective, sol.terminal_cost()) < (b.objective, b.terminal_cost())
                });
                if better {
                    *inc = Some((sol, origin));
                }
            }
        };
        offer(self.stored_tail(x), Origin::StoredTail, &mut incumbent);
        if let Some(p) = prev {
            offer(self.shifted(x, p), Origin::Shifted, &mut incumbent);
        }

        // goal branch: fewer steps than anything structural
        let goal_limit = match &incumbent {
            Some((s, _)) => (s.objective as usize).saturating_sub(1).min(n),
            None => n,
        };
        let mut stats = ReachStats::default();
        for k in 1..=goal_limit {
            if let Some(sol) = self.goal_plan(x, k, &mut stats) {
                telemetry.absorb_reach(&stats);
                return Ok((sol, Origin::GoalSearch));
            }
        }

        // candidate branch: ascending cost-to-go, first success is optimal
        let incumbent_key = incumbent.as_ref().and_then(|(s, _)| match &s.terminal {
            Terminal::Entry(e) => Some(e.state.key()),
            Terminal::Goal { .. } => None,
        });
        let bound = incumbent.as_ref().map(|(s, _)| s.objective);
        let mut pending: Vec<&SafeSetEntry> = Vec::new();
        for &e in &self.candidates {
            let objective = n as u32 + e.cost_to_go;
            if bound.is_some_and(|b| objective > b) {
                break;
            }
            if incumbent_key == Some(e.state.key()) {
                break;
            }
            if !reach::maybe_reachable(x, &e.state, n, self.spec) {
                continue;
            }
            pending.push(e);
            if pending.len() == self.cfg.candidate_limit {
                break;
            }
        }

        for batch in pending.chunks(self.cfg.batch) {
            telemetry.candidates_examined += batch.len();
            let results: Vec<(Option<HorizonSolution>, ReachStats)> = batch
                .par_iter()
                .map(|e| {
                    let mut st = ReachStats::default();
                    let sol = self.candidate_plan(x, e, &mut st);
                    (sol, st)
                })
                .collect();
            let mut found = None;
            for (sol, st) in results {
                stats.absorb(&st);
                if found.is_none() {
                    found = sol;
                }
            }
            if let Some(sol) = found {
                telemetry.absorb_reach(&stats);
                return Ok((sol, Origin::CandidateSearch));
            }
        }
        telemetry.absorb_reach(&stats);

        match incumbent {
            Some((sol, origin)) => {
                telemetry.structural_wins += 1;
                Ok((sol, origin))
            }
            None => Err(Error::SolverInfeasible {
                state: *x,
                step: telemetry.steps - 1,
            }),
        }
    }
}

/// One-shot solve without warm start.
pub fn solve_lmpc_step(
    x: &State,
    ss: &SampledSafeSet,
    spec: &SystemSpec,
    cfg: &SolverConfig,
) -> Result<HorizonSolution> {
    let planner = Planner::new(ss, spec, cfg)?;
    planner
        .solve(x, None, &mut Telemetry::default())
        .map(|(s, _)| s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub trajectory: Trajectory,
    pub telemetry: Telemetry,
    /// Objective of the first horizon problem, an upper bound on the cost.
    pub initial_objective: Option<u32>,
}

/// Closed-loop execution: solve, apply the first input, repeat until the
/// goal. The safe set stays frozen for the whole rollout.
pub fn receding_horizon_rollout(
    start: &State,
    ss: &SampledSafeSet,
    spec: &SystemSpec,
    cfg: &SolverConfig,
    step_cap: usize,
) -> Result<Rollout> {
    let planner = Planner::new(ss, spec, cfg)?;
    let mut telemetry = Telemetry::default();
    let mut inputs = Vec::new();
    let mut x = *start;
    let mut prev: Option<HorizonSolution> = None;
    let mut initial_objective = None;
    while !spec.is_goal(&x) {
        if inputs.len() >= step_cap {
            return Err(Error::Diverged(step_cap));
        }
        let (sol, _) = planner.solve(&x, prev.as_ref(), &mut telemetry)?;
        initial_objective.get_or_insert(sol.objective);
        let u = sol.inputs[0];
        inputs.push(u);
        x = step_dynamics(&x, &u);
        prev = Some(sol);
    }
    Ok(Rollout {
        trajectory: Trajectory::from_inputs(*start, inputs, spec),
        telemetry,
        initial_objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ObstacleEllipse;

    fn open_spec() -> SystemSpec {
        let mut s = SystemSpec::benchmark();
        s.obstacle = ObstacleEllipse::new(27.0, 60.0, 2.0, 2.0).unwrap();
        s
    }

    /// 0 -> 1 and coast at unit speed to 53, then brake onto the goal.
    fn unit_speed(spec: &SystemSpec) -> Trajectory {
        let mut inputs = vec![Input::new(0.0, 1.0)];
        inputs.extend(std::iter::repeat_n(Input::ZERO, 53));
        inputs.push(Input::new(0.0, -1.0));
        Trajectory::from_inputs(State::new(0.0, 0.0, 0.0), inputs, spec)
    }

    #[test]
    fn one_step_from_goal_neighbour() {
        let spec = open_spec();
        let mut ss = SampledSafeSet::new();
        ss.insert_trajectory(&unit_speed(&spec), &spec).unwrap();
        let sol = solve_lmpc_step(&State::new(53.0, 0.0, 1.0), &ss, &spec, &SolverConfig::default()).unwrap();
        assert_eq!(sol.objective, 1);
        assert_eq!(sol.terminal, Terminal::Goal { steps: 1 });
    }

    #[test]
    fn empty_safe_set_has_no_candidates() {
        let spec = open_spec();
        let r = solve_lmpc_step(&spec.start, &SampledSafeSet::new(), &spec, &SolverConfig::default());
        assert!(matches!(r, Err(Error::NoCandidates)));
    }

    #[test]
    fn stored_state_objective_never_exceeds_its_cost_to_go() {
        let spec = open_spec();
        let seed = unit_speed(&spec);
        let mut ss = SampledSafeSet::new();
        ss.insert_trajectory(&seed, &spec).unwrap();
        let cfg = SolverConfig::default();
        for t in [0usize, 5, 20, 40] {
            let x = seed.states[t];
            let sol = solve_lmpc_step(&x, &ss, &spec, &cfg).unwrap();
            assert!(sol.objective <= seed.cost - t as u32);
            let stages: u32 = sol.predicted_states[..cfg.horizon].iter().map(|s| spec.stage_cost(s)).sum();
            assert_eq!(sol.objective, stages + sol.terminal_cost());
        }
    }

    #[test]
    fn rollout_improves_on_seed() {
        let spec = open_spec();
        let seed = unit_speed(&spec);
        let mut ss = SampledSafeSet::new();
        ss.insert_trajectory(&seed, &spec).unwrap();
        let cfg = SolverConfig::default();
        let r = receding_horizon_rollout(&spec.start, &ss, &spec, &cfg, 200).unwrap();
        r.trajectory.validate(&spec).unwrap();
        assert!(r.trajectory.reaches_goal(&spec));
        assert!(r.trajectory.cost <= seed.cost);
        assert!(r.trajectory.cost <= r.initial_objective.unwrap());

        ss.insert_trajectory(&r.trajectory, &spec).unwrap();
        let r2 = receding_horizon_rollout(&spec.start, &ss, &spec, &cfg, 200).unwrap();
        assert!(r2.trajectory.cost <= r.trajectory.cost);
    }

    #[test]
    fn rollout_from_goal_is_empty() {
        let spec = open_spec();
        let mut ss = SampledSafeSet::new();
        ss.insert_trajectory(&unit_speed(&spec), &spec).unwrap();
        let r = receding_horizon_rollout(&spec.goal, &ss, &spec, &SolverConfig::default(), 10).unwrap();
        assert_eq!(r.trajectory.cost, 0);
        assert!(r.trajectory.inputs.is_empty());
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = SolverConfig {
            horizon: 0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
