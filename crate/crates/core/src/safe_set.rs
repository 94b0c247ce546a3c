//! Sampled safe sets and their tabular cost-to-go.
//!
//! A safe set is the collection of every state visited by a successful
//! trajectory. Each stored state carries the smallest cost-to-go observed
//! over all recorded visits, which is the terminal cost used by the
//! finite-horizon problem. Entries also remember the input and successor
//! state of the visit that achieved that minimum, so the stored tail of a
//! trajectory can be replayed as a candidate solution.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;


use crate::clustering::ModeLabel;
use crate::error::{Error, Result};
use crate::model::{Input, State, StateKey, SystemSpec, Trajectory};

/// Terminal cost of a state: finite for stored states, infinite otherwise.
///
/// The derived order puts every finite value below `Infinite`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CostToGo {
    Finite(u32),
    Infinite,
}

impl CostToGo {
    pub fn finite(self) -> Option<u32> {
        match self {
            CostToGo::Finite(c) => Some(c),
            CostToGo::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, CostToGo::Infinite)
    }
}

impl fmt::Display for CostToGo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CostToGo::Finite(c) => write!(f, "{c}"),
            CostToGo::Infinite => f.write_str("inf"),
        }
    }
}

/// Input applied at a stored state and the key of the state it led to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Successor {
    pub input: Input,
    pub next: StateKey,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SafeSetEntry {
    pub state: State,
    pub cost_to_go: u32,
    /// `None` for goal states and for entries loaded from text.
    pub successor: Option<Successor>,
}

#[derive(Debug, Clone, Default)]
pub struct SampledSafeSet {
    entries: Vec<SafeSetEntry>,
    index: HashMap<StateKey, usize>,
    source_count: usize,
}

impl PartialEq for SampledSafeSet {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries && self.source_count == other.source_count
    }
}

impl SampledSafeSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of trajectories inserted so far.
    pub fn source_count(&self) -> usize {
        self.source_count
    }

    /// Entries in insertion order.
    pub fn entries(&self) -> &[SafeSetEntry] {
        &self.entries
    }

    pub fn get(&self, x: &State) -> Option<&SafeSetEntry> {
        self.get_key(&x.key())
    }

    pub fn get_key(&self, key: &StateKey) -> Option<&SafeSetEntry> {
        self.index.get(key).map(|&i| &self.entries[i])
    }

    /// Stored entry within `tol` of `x` (max-norm), looking at neighbouring
    /// keys so that values straddling a rounding boundary still match.
    pub fn find_near(&self, x: &State, tol: f64) -> Option<&SafeSetEntry> {
        x.key()
            .neighborhood()
            .filter_map(|k| self.get_key(&k))
            .find(|e| e.state.max_abs_diff(x) <= tol)
    }

    /// Terminal cost of `x`: the stored cost-to-go, or infinity.
    pub fn query_q(&self, x: &State) -> CostToGo {
        match self.get(x) {
            Some(e) => CostToGo::Finite(e.cost_to_go),
            None => CostToGo::Infinite,
        }
    }

    /// The entry reached from `entry` along its best recorded visit.
    pub fn successor_of(&self, entry: &SafeSetEntry) -> Option<(Input, &SafeSetEntry)> {
        let succ = entry.successor?;
        self.get_key(&succ.next).map(|e| (succ.input, e))
    }

    /// Adds every state of a successful trajectory, keeping per state the
    /// minimum suffix cost over all visits. Inserting the same trajectory
    /// twice leaves the entries unchanged.
    pub fn insert_trajectory(&mut self, traj: &Trajectory, spec: &SystemSpec) -> Result<()> {
        let last = traj
            .last()
            .ok_or_else(|| Error::InvalidTrajectory("no states".into()))?;
        if !spec.is_goal(last) {
            return Err(Error::TrajectoryNotAtGoal(*last));
        }
        traj.validate(spec)?;

        let n = traj.states.len();
        let mut suffix = vec![0u32; n];
        let mut acc = 0u32;
        for k in (0..n).rev() {
            acc += spec.stage_cost(&traj.states[k]);
            suffix[k] = acc;
        }

        for (k, x) in traj.states.iter().enumerate() {
            let successor = if spec.is_goal(x) {
                None
            } else {
                traj.inputs.get(k).map(|&input| Successor {
                    input,
                    next: traj.states[k + 1].key(),
                })
            };
            self.upsert(*x, suffix[k], successor);
        }
        self.source_count += 1;
        Ok(())
    }

    fn upsert(&mut self, state: State, cost_to_go: u32, successor: Option<Successor>) {
        let key = state.key();
        match self.index.get(&key) {
            Some(&i) => {
                let e = &mut self.entries[i];
                if cost_to_go < e.cost_to_go {
                    e.cost_to_go = cost_to_go;
                    e.successor = successor;
                }
            }
            None => {
                self.index.insert(key, self.entries.len());
                self.entries.push(SafeSetEntry {
                    state,
                    cost_to_go,
                    successor,
                });
            }
        }
    }

    /// All entries sorted by ascending cost-to-go, ties in insertion order.
    pub fn terminal_candidates(&self) -> Result<Vec<&SafeSetEntry>> {
        if self.entries.is_empty() {
            return Err(Error::NoCandidates);
        }
        let mut out: Vec<&SafeSetEntry> = self.entries.iter().collect();
        // stable sort keeps insertion order among equal costs
        out.sort_by_key(|e| e.cost_to_go);
        Ok(out)
    }

    /// Merges `other` into `self` with per-state minimum cost-to-go.
    pub fn merge(&mut self, other: &SampledSafeSet) {
        for e in &other.entries {
            self.upsert(e.state, e.cost_to_go, e.successor);
        }
        self.source_count += other.source_count;
    }

    /// `(key, cost)` pairs sorted by key; two sets built from the same data
    /// in different orders compare equal under this view.
    pub fn cost_table(&self) -> Vec<(StateKey, u32)> {
        let mut t: Vec<_> = self
            .entries
            .iter()
            .map(|e| (e.state.key(), e.cost_to_go))
            .collect();
        t.sort_unstable();
        t
    }

    /// One entry per line: `z y v cost_to_go`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!(
                "{} {} {} {}\n",
                e.state.z, e.state.y, e.state.v, e.cost_to_go
            ));
        }
        out
    }

    /// Inverse of [`to_text`](Self::to_text). Blank lines and lines starting
    /// with `#` are skipped. Successor links are not part of the format.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut set = SampledSafeSet::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |what: &str| {
                Error::Parse {
                    path: "<safe set>".into(),
                    message: format!("line {}: {what}: {line:?}", lineno + 1),
                }
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(bad("expected 4 fields"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
            let state = State::new(num(fields[0])?, num(fields[1])?, num(fields[2])?);
            let cost = fields[3].parse::<u32>().map_err(|_| bad("bad cost"))?;
            set.upsert(state, cost, None);
        }
        Ok(set)
    }

    pub fn write_text(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read_text(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse {
                path: path.into(),
                message,
            },
            other => other,
        })
    }
}

/// Per-mode learning state: safe set, value function, observed costs.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeStore {
    pub mode: ModeLabel,
    pub safe_set: SampledSafeSet,
    /// Realized cost of every execution recorded to this mode, in order.
    pub costs: Vec<u32>,
    /// Trajectories inserted into `safe_set`, in order.
    pub trajectories: Vec<Trajectory>,
}

impl ModeStore {
    pub fn new(mode: ModeLabel) -> Self {
        Self {
            mode,
            safe_set: SampledSafeSet::new(),
            costs: Vec::new(),
            trajectories: Vec::new(),
        }
    }

    /// Execution count `n_m`.
    pub fn n(&self) -> usize {
        self.costs.len()
    }

    /// Best observed cost; `None` before the first execution.
    pub fn best(&self) -> Option<u32> {
        self.costs.iter().copied().min()
    }

    pub fn best_trajectory(&self) -> Option<&Trajectory> {
        self.trajectories.iter().min_by_key(|t| t.cost)
    }

    pub fn record(&mut self, traj: Trajectory, spec: &SystemSpec) -> Result<()> {
        self.safe_set.insert_trajectory(&traj, spec)?;
        self.costs.push(traj.cost);
        self.trajectories.push(traj);
        Ok(())
    }
}

/// Union of all mode safe sets with per-state minimum cost-to-go: the set a
/// single-set controller would have built from the same trajectories.
pub fn pooled_union(stores: &[ModeStore]) -> SampledSafeSet {
    let mut pooled = SampledSafeSet::new();
    for s in stores {
        pooled.merge(&s.safe_set);
    }
    pooled
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Input;

    /// Benchmark dynamics with the obstacle moved off the straight line.
    fn spec() -> SystemSpec {
        let mut s = SystemSpec::benchmark();
        s.obstacle = crate::model::ObstacleEllipse::new(27.0, 40.0, 5.0, 5.0).unwrap();
        s
    }

    /// Straight run along y = 0: accelerate to `speed`, coast, brake onto
    /// the goal. `54 / speed` must be an integer.
    fn run_at(speed: f64, spec: &SystemSpec) -> Trajectory {
        let coast = (54.0 / speed) as usize - 1;
        let mut inputs = vec![Input::new(0.0, speed)];
        inputs.extend(std::iter::repeat_n(Input::new(0.0, 0.0), coast));
        inputs.push(Input::new(0.0, -speed));
        Trajectory::from_inputs(State::new(0.0, 0.0, 0.0), inputs, spec)
    }

    #[test]
    fn insert_sets_suffix_costs() {
        let spec = spec();
        let t = run_at(1.0, &spec);
        let mut ss = SampledSafeSet::new();
        ss.insert_trajectory(&t, &spec).unwrap();
        assert_eq!(ss.query_q(&t.states[0]), CostToGo::Finite(t.cost));
        for (k, x) in t.states.iter().enumerate() {
            let expect = t.cost.saturating_sub(k as u32);
            assert_eq!(ss.query_q(x), CostToGo::Finite(expect));
        }
        assert_eq!(ss.query_q(t.last().unwrap()), CostToGo::Finite(0));
        assert_eq!(ss.query_q(&State::new(1.0, 1.0, 1.0)), CostToGo::Infinite);
    }

    #[test]
    fn insert_is_idempotent() {
        let spec = spec();
        let t = run_at(1.0, &spec);
        let mut ss = SampledSafeSet::new();
        ss.insert_trajectory(&t, &spec).unwrap();
        let once = ss.entries().to_vec();
        ss.insert_trajectory(&t, &spec).unwrap();
        assert_eq!(ss.entries(), &once[..]);
        assert_eq!(ss.source_count(), 2);
    }

    #[test]
    fn min_update_on_shared_state() {
        let spec = spec();
        let slow = run_at(0.5, &spec);
        let slow_cost = slow.cost;
        // same start, but faster: accelerate twice
        let mut inputs = vec![Input::new(0.0, 1.0), Input::new(0.0, 1.0)];
        // v = 2 and z = 1 after two steps, coast to 51, brake twice
        inputs.extend(std::iter::repeat_n(Input::new(0.0, 0.0), 25));
        inputs.push(Input::new(0.0, -1.0));
        inputs.push(Input::new(0.0, -1.0));
        let fast = Trajectory::from_inputs(State::new(0.0, 0.0, 0.0), inputs, &spec);
        assert_eq!(fast.last().unwrap().z, 54.0);
        assert!(fast.cost < slow_cost);

        let mut ss = SampledSafeSet::new();
        ss.insert_trajectory(&slow, &spec).unwrap();
        assert_eq!(ss.query_q(&slow.states[0]), CostToGo::Finite(slow_cost));
        ss.insert_trajectory(&fast, &spec).unwrap();
        assert_eq!(ss.query_q(&slow.states[0]), CostToGo::Finite(fast.cost));
        // successor now follows the faster run
        let e = ss.get(&slow.states[0]).unwrap();
        let (_, next) = ss.successor_of(e).unwrap();
        assert_eq!(next.state, fast.states[1]);
    }

    #[test]
    fn rejects_failed_rollout() {
        let spec = spec();
        let mut t = run_at(0.5, &spec);
        t.states.pop();
        t.inputs.pop();
        t.cost -= 1;
        let mut ss = SampledSafeSet::new();
        assert!(matches!(
            ss.insert_trajectory(&t, &spec),
            Err(Error::TrajectoryNotAtGoal(_))
        ));
        assert!(ss.is_empty());
    }

    #[test]
    fn candidate_order_and_ties() {
        let text = "1 0 0 7\n2 0 0 3\n54 0 0 0\n3 0 0 3\n";
        let ss = SampledSafeSet::from_text(text).unwrap();
        let c: Vec<(f64, u32)> = ss
            .terminal_candidates()
            .unwrap()
            .iter()
            .map(|e| (e.state.z, e.cost_to_go))
            .collect();
        assert_eq!(c, vec![(54.0, 0), (2.0, 3), (3.0, 3), (1.0, 7)]);
        assert!(matches!(
            SampledSafeSet::new().terminal_candidates(),
            Err(Error::NoCandidates)
        ));
    }

    #[test]
    fn pooled_union_cases() {
        let spec = spec();
        let a = run_at(1.0, &spec);
        let b = run_at(0.5, &spec);
        let mut m1 = ModeStore::new(ModeLabel(1));
        m1.record(a.clone(), &spec).unwrap();
        let mut m2 = ModeStore::new(ModeLabel(2));
        m2.record(b.clone(), &spec).unwrap();

        let single = pooled_union(std::slice::from_ref(&m1));
        assert_eq!(single.cost_table(), m1.safe_set.cost_table());

        let both = pooled_union(&[m1.clone(), m2.clone()]);
        // they share the start state and the goal
        assert_eq!(both.len(), m1.safe_set.len() + m2.safe_set.len() - 2);
        let goals = both
            .entries()
            .iter()
            .filter(|e| spec.is_goal(&e.state))
            .count();
        assert_eq!(goals, 1);
        assert_eq!(both.query_q(&spec.goal), CostToGo::Finite(0));

        let mut direct = SampledSafeSet::new();
        direct.insert_trajectory(&a, &spec).unwrap();
        direct.insert_trajectory(&b, &spec).unwrap();
        assert_eq!(direct.cost_table(), both.cost_table());
    }

    #[test]
    fn text_round_trip() {
        let spec = spec();
        let mut ss = SampledSafeSet::new();
        ss.insert_trajectory(&run_at(1.0, &spec), &spec).unwrap();
        let back = SampledSafeSet::from_text(&ss.to_text()).unwrap();
        assert_eq!(back.cost_table(), ss.cost_table());
        for (x, y) in back.entries().iter().zip(ss.entries()) {
            assert_eq!(x.state, y.state);
        }
        assert!(SampledSafeSet::from_text("1 2 3").is_err());
        assert!(SampledSafeSet::from_text("1 2 3 -1").is_err());
    }

    #[test]
    fn mode_store_stats() {
        let spec = spec();
        let mut m = ModeStore::new(ModeLabel(1));
        assert_eq!(m.best(), None);
        let slow = run_at(0.5, &spec);
        m.record(slow.clone(), &spec).unwrap();
        m.record(run_at(1.0, &spec), &spec).unwrap();
        assert_eq!(m.n(), 2);
        assert_eq!(m.best(), Some(slow.cost.min(run_at(1.0, &spec).cost)));
    }
}
