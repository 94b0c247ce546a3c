//! Steering the car onto an exact target state in a fixed number of steps.
//!
//! The first `k - 2` inputs come from a beam search over a heading ×
//! acceleration grid. The last two steps are solved in closed form: with
//! the speed `w` at the middle step chosen inside its admissible interval,
//! the two displacement vectors (lengths `v` and `w`) must close the
//! triangle onto the target, which fixes both headings up to a mirror
//! image. If the grid misses, the best incumbent is refined coordinate by
//! coordinate with a halving step.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::f64::consts::PI;

use crate::model::{step_dynamics, wrap_angle, Input, State, SystemSpec};

use super::SolverConfig;

/// Max-norm tolerance for "the predicted state equals the target".
pub const MATCH_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ReachPlan {
    pub inputs: Vec<Input>,
    /// `inputs.len() + 1` states starting at the initial state.
    pub states: Vec<State>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ReachStats {
    pub calls: usize,
    pub beam_nodes: usize,
    pub closures: usize,
    pub refine_steps: usize,
    /// Total reduction of the closure residual achieved by refinement.
    pub refine_gain: f64,
}

impl ReachStats {
    pub fn absorb(&mut self, other: &ReachStats) {
        self.calls += other.calls;
        self.beam_nodes += other.beam_nodes;
        self.closures += other.closures;
        self.refine_steps += other.refine_steps;
        self.refine_gain += other.refine_gain;
    }
}

/// Finds `k` feasible inputs taking `x0` onto `target` (within
/// [`MATCH_TOL`]) with every intermediate state feasible. `None` means the
/// search found nothing at the configured resolution, not that no such
/// sequence exists.
pub fn reach_candidate(
    x0: &State,
    target: &State,
    k: usize,
    spec: &SystemSpec,
    cfg: &SolverConfig,
) -> Option<Vec<Input>> {
    let mut stats = ReachStats::default();
    reach(x0, target, k, spec, cfg, &mut stats).map(|p| p.inputs)
}

pub(crate) fn reach(
    x0: &State,
    target: &State,
    k: usize,
    spec: &SystemSpec,
    cfg: &SolverConfig,
    stats: &mut ReachStats,
) -> Option<ReachPlan> {
    stats.calls += 1;
    if k == 0 || !maybe_reachable(x0, target, k, spec) {
        return None;
    }
    match k {
        1 => close_one(x0, target, spec).ok().map(|u| plan_from(x0, vec![u])),
        2 => {
            stats.closures += 1;
            close_two(x0, target, spec)
                .ok()
                .map(|(u1, u2)| plan_from(x0, vec![u1, u2]))
        }
        _ => Beam::new(x0, target, k, spec, cfg).run(stats),
    }
}

fn plan_from(x0: &State, inputs: Vec<Input>) -> ReachPlan {
    let mut states = Vec::with_capacity(inputs.len() + 1);
    states.push(*x0);
    let mut x = *x0;
    for u in &inputs {
        x = step_dynamics(&x, u);
        states.push(x);
    }
    ReachPlan { inputs, states }
}

/// Largest distance coverable in `m` steps starting at speed `v0` and
/// ending at speed `vt`: the sum of the pointwise-maximal speed profile.
pub fn max_travel(v0: f64, vt: f64, m: usize, spec: &SystemSpec) -> f64 {
    let s = spec.accel_bound;
    (0..m)
        .map(|l| {
            let l = l as f64;
            (v0 + l * s).min(vt + (m as f64 - l) * s).min(spec.v_max)
        })
        .sum()
}

/// Cheap necessary condition: the speed change fits in `m` steps and the
/// distance is within the maximal travel.
pub fn maybe_reachable(x0: &State, target: &State, m: usize, spec: &SystemSpec) -> bool {
    let dv = (target.v - x0.v).abs();
    if dv > m as f64 * spec.accel_bound + MATCH_TOL {
        return false;
    }
    let d = ((target.z - x0.z).powi(2) + (target.y - x0.y).powi(2)).sqrt();
    d <= max_travel(x0.v, target.v, m, spec) + MATCH_TOL
}

/// Heuristic distance from "two-step closable" for a node `m` steps away.
fn reach_residual(x: &State, target: &State, m: usize, spec: &SystemSpec) -> f64 {
    let s = spec.accel_bound;
    let speed_gap = ((target.v - x.v).abs() - m as f64 * s).max(0.0);
    let d = ((target.z - x.z).powi(2) + (target.y - x.y).powi(2)).sqrt();
    let dmax = max_travel(x.v, target.v, m, spec);
    // the first displacement has length exactly v; the rest can cancel it
    let rest = dmax - x.v.min(spec.v_max);
    let dmin = (x.v - rest).max(0.0);
    10.0 * speed_gap + (d - dmax).max(0.0) + (dmin - d).max(0.0)
}

/// Where in the reachable annulus the target sits, 0 at the centre.
fn centering(x: &State, target: &State, m: usize, spec: &SystemSpec) -> f64 {
    let d = ((target.z - x.z).powi(2) + (target.y - x.y).powi(2)).sqrt();
    let dmax = max_travel(x.v, target.v, m, spec).max(1e-9);
    (d / dmax - 0.5).abs()
}

fn check_final(f: &State, target: &State, spec: &SystemSpec) -> bool {
    f.max_abs_diff(target) <= MATCH_TOL && (spec.check_state(f) || f == target)
}

/// One-step closure: only possible when the distance equals the speed.
fn close_one(x: &State, target: &State, spec: &SystemSpec) -> Result<Input, f64> {
    let dz = target.z - x.z;
    let dy = target.y - x.y;
    let d = (dz * dz + dy * dy).sqrt();
    let a = target.v - x.v;
    let resid = (d - x.v).abs() + (a.abs() - spec.accel_bound).max(0.0);
    if resid > MATCH_TOL {
        return Err(resid);
    }
    let theta = if d > 0.0 { dy.atan2(dz) } else { 0.0 };
    let u = Input::new(theta, a.clamp(-spec.accel_bound, spec.accel_bound));
    let f = step_dynamics(x, &u);
    if check_final(&f, target, spec) {
        Ok(u)
    } else {
        Err(f.max_abs_diff(target).max(MATCH_TOL * 2.0))
    }
}

/// Closed-form two-step closure. On failure returns a positive residual
/// that shrinks as the start gets closer to admitting a solution.
pub(crate) fn close_two(x: &State, target: &State, spec: &SystemSpec) -> Result<(Input, Input), f64> {
    let s = spec.accel_bound;
    let v = x.v;
    let vt = target.v;
    let rz = target.z - x.z;
    let ry = target.y - x.y;
    let d = (rz * rz + ry * ry).sqrt();

    let lo = [0.0, v - s, vt - s, d - v, v - d]
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    let hi = [spec.v_max, v + s, vt + s, v + d]
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    if lo > hi + 1e-12 {
        return Err(lo - hi);
    }
    let hi = hi.max(lo);

    let span = hi - lo;
    let fractions: &[f64] = if span < 1e-12 {
        &[0.5]
    } else {
        &[0.5, 0.25, 0.75, 0.1, 0.9, 0.0, 1.0]
    };
    let phi = ry.atan2(rz);

    let mut best_resid = f64::INFINITY;
    for &frac in fractions {
        let a1 = (lo + frac * span - v).clamp(-s, s);
        let w = v + a1;
        let a2 = (vt - w).clamp(-s, s);

        let mut firsts: Vec<f64> = Vec::with_capacity(8);
        if v <= 0.0 {
            firsts.push(0.0);
        } else if d <= 1e-12 {
            firsts.extend((0..8).map(|i| -PI + f64::from(i) * PI / 4.0));
        } else {
            let cos_alpha = ((v * v + d * d - w * w) / (2.0 * v * d)).clamp(-1.0, 1.0);
            let alpha = cos_alpha.acos();
            firsts.push(wrap_angle(phi + alpha));
            if alpha > 0.0 {
                firsts.push(wrap_angle(phi - alpha));
            }
        }

        for theta1 in firsts {
            let u1 = Input::new(theta1, a1);
            let mid = step_dynamics(x, &u1);
            if !spec.check_state(&mid) {
                let inside = (1.0 - spec.obstacle.level(mid.z, mid.y)).max(0.0);
                let speed = (mid.v - spec.v_max).max(0.0) + (-mid.v).max(0.0);
                best_resid = best_resid.min(1e-3 + inside + speed);
                continue;
            }
            let r2z = target.z - mid.z;
            let r2y = target.y - mid.y;
            let theta2 = if r2z.abs() + r2y.abs() > 0.0 {
                r2y.atan2(r2z)
            } else {
                0.0
            };
            let u2 = Input::new(theta2, a2);
            let f = step_dynamics(&mid, &u2);
            if check_final(&f, target, spec) {
                return Ok((u1, u2));
            }
            best_resid = best_resid.min(1e-3 + f.max_abs_diff(target));
        }
    }
    Err(best_resid)
}

#[derive(Debug, Clone)]
struct Node {
    state: State,
    inputs: Vec<Input>,
    score: f64,
    tie: f64,
}

fn by_score(a: &Node, b: &Node) -> Ordering {
    a.score
        .total_cmp(&b.score)
        .then(a.tie.total_cmp(&b.tie))
}

struct Beam<'a> {
    x0: State,
    target: State,
    k: usize,
    spec: &'a SystemSpec,
    cfg: &'a SolverConfig,
    grid: Vec<Input>,
}

impl<'a> Beam<'a> {
    fn new(x0: &State, target: &State, k: usize, spec: &'a SystemSpec, cfg: &'a SolverConfig) -> Self {
        Self {
            x0: *x0,
            target: *target,
            k,
            spec,
            cfg,
            grid: input_grid(cfg, spec),
        }
    }

    fn run(&self, stats: &mut ReachStats) -> Option<ReachPlan> {
        let free = self.k - 2;
        let mut beam = vec![Node {
            state: self.x0,
            inputs: Vec::new(),
            score: 0.0,
            tie: 0.0,
        }];
        for level in 0..free {
            let remaining = self.k - level - 1;
            let mut children = Vec::with_capacity(beam.len() * self.grid.len());
            for node in &beam {
                for u in &self.grid {
                    let x = step_dynamics(&node.state, u);
                    if !self.spec.check_state(&x) {
                        continue;
                    }
                    let score = reach_residual(&x, &self.target, remaining, self.spec);
                    let tie = centering(&x, &self.target, remaining, self.spec);
                    let mut inputs = node.inputs.clone();
                    inputs.push(*u);
                    children.push(Node {
                        state: x,
                        inputs,
                        score,
                        tie,
                    });
                }
            }
            stats.beam_nodes += children.len();
            children.sort_by(by_score);
            let keep = if level + 1 == free {
                self.cfg.beam_width * 4
            } else {
                self.cfg.beam_width
            };
            beam = dedup_truncate(children, keep);
            if beam.is_empty() {
                return None;
            }
        }

        let mut best: Option<(f64, &Node)> = None;
        for node in &beam {
            stats.closures += 1;
            match close_two(&node.state, &self.target, self.spec) {
                Ok((u1, u2)) => {
                    let mut inputs = node.inputs.clone();
                    inputs.extend([u1, u2]);
                    return Some(plan_from(&self.x0, inputs));
                }
                Err(r) => {
                    if best.is_none_or(|(br, _)| r < br) {
                        best = Some((r, node));
                    }
                }
            }
        }
        let (resid, node) = best?;
        self.refine(node.inputs.clone(), resid, stats)
    }

    /// Residual of a full free-input prefix: infeasible prefixes are
    /// penalised, feasible ones score their closure residual.
    fn prefix_residual(&self, inputs: &[Input]) -> Result<(Input, Input), f64> {
        let mut x = self.x0;
        for u in inputs {
            if !self.spec.check_input(u) {
                return Err(1e6);
            }
            x = step_dynamics(&x, u);
            if !self.spec.check_state(&x) {
                return Err(1e3 + (1.0 - self.spec.obstacle.level(x.z, x.y)).max(0.0));
            }
        }
        close_two(&x, &self.target, self.spec)
    }

    fn refine(&self, mut inputs: Vec<Input>, mut resid: f64, stats: &mut ReachStats) -> Option<ReachPlan> {
        let s = self.spec.accel_bound;
        let mut dtheta = PI / self.cfg.theta_grid as f64;
        let mut da = s / (self.cfg.a_grid - 1) as f64;
        for _ in 0..self.cfg.refine_rounds {
            let mut improved = true;
            while improved {
                improved = false;
                for i in 0..inputs.len() {
                    for (dt, dacc) in [(dtheta, 0.0), (-dtheta, 0.0), (0.0, da), (0.0, -da)] {
                        let mut trial = inputs.clone();
                        trial[i].theta = wrap_angle(trial[i].theta + dt);
                        trial[i].a = (trial[i].a + dacc).clamp(-s, s);
                        stats.refine_steps += 1;
                        stats.closures += 1;
                        match self.prefix_residual(&trial) {
                            Ok((u1, u2)) => {
                                stats.refine_gain += resid;
                                trial.extend([u1, u2]);
                                return Some(plan_from(&self.x0, trial));
                            }
                            Err(r) if r < resid => {
                                stats.refine_gain += resid - r;
                                resid = r;
                                inputs = trial;
                                improved = true;
                            }
                            Err(_) => {}
                        }
                    }
                }
            }
            dtheta *= 0.5;
            da *= 0.5;
        }
        None
    }
}

/// Drops near-duplicate states (same cell at a quarter-unit resolution)
/// and keeps at most `keep` of what remains, in order.
fn dedup_truncate(sorted: Vec<Node>, keep: usize) -> Vec<Node> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(keep);
    for n in sorted {
        let cell = (
            (n.state.z * 4.0).round() as i64,
            (n.state.y * 4.0).round() as i64,
            (n.state.v * 4.0).round() as i64,
        );
        if seen.insert(cell) {
            out.push(n);
            if out.len() == keep {
                break;
            }
        }
    }
    out
}

/// Heading samples uniform on `[-pi, pi)`, accelerations uniform on
/// `[-s, s]` with both ends included.
pub fn input_grid(cfg: &SolverConfig, spec: &SystemSpec) -> Vec<Input> {
    let s = spec.accel_bound;
    let mut out = Vec::with_capacity(cfg.theta_grid * cfg.a_grid);
    for i in 0..cfg.theta_grid {
        let theta = -PI + 2.0 * PI * i as f64 / cfg.theta_grid as f64;
        for j in 0..cfg.a_grid {
            let a = -s + 2.0 * s * j as f64 / (cfg.a_grid - 1) as f64;
            out.push(Input::new(theta, a));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    fn open_spec() -> SystemSpec {
        let mut s = SystemSpec::benchmark();
        s.obstacle = crate::model::ObstacleEllipse::new(27.0, 60.0, 2.0, 2.0).unwrap();
        s
    }

    fn replay_ok(x0: &State, target: &State, inputs: &[Input], spec: &SystemSpec) {
        let mut x = *x0;
        for u in inputs {
            assert!(spec.check_input(u), "{u:?}");
            x = step_dynamics(&x, u);
            assert!(spec.check_state(&x), "{x:?}");
        }
        assert!(x.max_abs_diff(target) <= MATCH_TOL, "{x:?} vs {target:?}");
    }

    #[test]
    fn one_step_onto_goal() {
        let spec = SystemSpec::benchmark();
        let u = reach_candidate(&State::new(53.0, 0.0, 1.0), &spec.goal, 1, &spec, &cfg()).unwrap();
        assert_eq!(u, vec![Input::new(0.0, -1.0)]);
    }

    #[test]
    fn equilibrium_stays_put() {
        let spec = SystemSpec::benchmark();
        let u = reach_candidate(&spec.goal, &spec.goal, 1, &spec, &cfg()).unwrap();
        assert_eq!(u, vec![Input::new(0.0, 0.0)]);
    }

    #[test]
    fn cannot_move_from_rest_in_one_step() {
        let spec = SystemSpec::benchmark();
        assert!(reach_candidate(&State::new(0.0, 0.0, 0.0), &State::new(5.0, 0.0, 0.0), 1, &spec, &cfg()).is_none());
    }

    #[test]
    fn two_step_closure_is_exact() {
        let spec = open_spec();
        let x0 = State::new(0.0, 0.0, 2.0);
        let target = State::new(3.0, 1.0, 2.5);
        let u = reach_candidate(&x0, &target, 2, &spec, &cfg()).unwrap();
        replay_ok(&x0, &target, &u, &spec);
    }

    #[test]
    fn beam_reaches_far_target() {
        let spec = open_spec();
        let x0 = State::new(0.0, 0.0, 0.0);
        // 0+1+2+3+4+5 = 15 is the max travel in 6 steps ending at speed 6
        let target = State::new(12.0, 4.0, 5.0);
        let u = reach_candidate(&x0, &target, 6, &spec, &cfg()).unwrap();
        assert_eq!(u.len(), 6);
        replay_ok(&x0, &target, &u, &spec);
    }

    #[test]
    fn beam_goes_around_obstacle() {
        let spec = SystemSpec::benchmark();
        let x0 = State::new(8.0, 0.0, 4.0);
        let target = State::new(30.0, -6.0, 5.0);
        let u = reach_candidate(&x0, &target, 6, &spec, &cfg()).unwrap();
        replay_ok(&x0, &target, &u, &spec);
    }

    #[test]
    fn bound_rejects_too_far() {
        let spec = open_spec();
        let x0 = State::new(0.0, 0.0, 0.0);
        assert_eq!(max_travel(0.0, 0.0, 6, &spec), 0.0 + 1.0 + 2.0 + 3.0 + 2.0 + 1.0);
        assert!(!maybe_reachable(&x0, &State::new(9.5, 0.0, 0.0), 6, &spec));
        assert!(maybe_reachable(&x0, &State::new(9.0, 0.0, 0.0), 6, &spec));
        assert!(reach_candidate(&x0, &State::new(9.5, 0.0, 0.0), 6, &spec, &cfg()).is_none());
    }

    #[test]
    fn tight_straight_line_is_found() {
        let spec = open_spec();
        let x0 = State::new(0.0, 0.0, 0.0);
        // exactly the maximal profile 0,1,2,3,2,1 -> 9, arriving at rest
        let u = reach_candidate(&x0, &State::new(9.0, 0.0, 0.0), 6, &spec, &cfg()).unwrap();
        replay_ok(&x0, &State::new(9.0, 0.0, 0.0), &u, &spec);
    }

    #[test]
    fn grid_shape() {
        let g = input_grid(&cfg(), &SystemSpec::benchmark());
        assert_eq!(g.len(), 25 * 9);
        assert!(g.iter().all(|u| SystemSpec::benchmark().check_input(u)));
        assert_eq!(g[0], Input::new(-PI, -1.0));
        assert_eq!(g[8], Input::new(-PI, 1.0));
    }
}
