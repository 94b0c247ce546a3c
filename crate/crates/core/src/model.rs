//! The controlled system: a point-mass "Dubins car" with bounded acceleration
//! that must travel from a start state to a resting goal while keeping every
//! sampled state outside an elliptical obstacle.
//!
//! The dynamics are
//!
//! ```text
//! z' = z + v cos(theta)
//! y' = y + v sin(theta)
//! v' = v + a
//! ```
//!
//! and the stage cost is the indicator "not yet at the goal", so the total
//! cost of a trajectory is the number of steps it needs.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of decimal digits kept when a state is turned into a lookup key.
pub const KEY_DIGITS: i32 = 9;

/// Vehicle state: planar position `(z, y)` and speed `v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub z: f64,
    pub y: f64,
    pub v: f64,
}

impl State {
    pub const fn new(z: f64, y: f64, v: f64) -> Self {
        Self { z, y, v }
    }

    pub fn is_finite(&self) -> bool {
        self.z.is_finite() && self.y.is_finite() && self.v.is_finite()
    }

    /// Canonical identity of the state after rounding every component to
    /// [`KEY_DIGITS`] decimals.
    pub fn key(&self) -> StateKey {
        let scale = 10f64.powi(KEY_DIGITS);
        let q = |x: f64| {
            let r = (x * scale).round();
            // -0.0 and 0.0 must collide
            if r == 0.0 {
                0
            } else {
                r as i64
            }
        };
        StateKey([q(self.z), q(self.y), q(self.v)])
    }

    /// Largest absolute component difference.
    pub fn max_abs_diff(&self, other: &State) -> f64 {
        (self.z - other.z)
            .abs()
            .max((self.y - other.y).abs())
            .max((self.v - other.v).abs())
    }
}

/// Hashable, totally ordered identity of a [`State`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateKey(pub [i64; 3]);

impl StateKey {
    /// The 27 keys within one rounding unit of this one, self first.
    pub fn neighborhood(&self) -> impl Iterator<Item = StateKey> + '_ {
        const OFFSETS: [i64; 3] = [0, -1, 1];
        OFFSETS.iter().flat_map(move |&dz| {
            OFFSETS.iter().flat_map(move |&dy| {
                OFFSETS.iter().map(move |&dv| {
                    StateKey([self.0[0] + dz, self.0[1] + dy, self.0[2] + dv])
                })
            })
        })
    }
}

/// Control input: heading `theta` (radians) and acceleration `a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Input {
    pub theta: f64,
    pub a: f64,
}

impl Input {
    pub const ZERO: Input = Input { theta: 0.0, a: 0.0 };

    pub const fn new(theta: f64, a: f64) -> Self {
        Self { theta, a }
    }
}

/// Axis-aligned ellipse; states must satisfy
/// `(z - z_obs)^2 / a_e^2 + (y - y_obs)^2 / b_e^2 >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleEllipse {
    pub z_obs: f64,
    pub y_obs: f64,
    pub a_e: f64,
    pub b_e: f64,
}

impl ObstacleEllipse {
    pub fn new(z_obs: f64, y_obs: f64, a_e: f64, b_e: f64) -> Result<Self> {
        if !(a_e > 0.0 && b_e > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "obstacle semi-axes must be positive, got a_e={a_e}, b_e={b_e}"
            )));
        }
        Ok(Self {
            z_obs,
            y_obs,
            a_e,
            b_e,
        })
    }

    /// Left-hand side of the exterior inequality; `>= 1` means outside.
    pub fn level(&self, z: f64, y: f64) -> f64 {
        let dz = (z - self.z_obs) / self.a_e;
        let dy = (y - self.y_obs) / self.b_e;
        dz * dz + dy * dy
    }

    pub fn contains(&self, z: f64, y: f64) -> bool {
        self.level(z, y) < 1.0
    }
}

/// Everything that defines one instance of the reach-avoid task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub obstacle: ObstacleEllipse,
    /// Acceleration bound `s`: `|a| <= s`.
    pub accel_bound: f64,
    pub v_max: f64,
    pub start: State,
    pub goal: State,
    /// Per-component absolute tolerance of the goal test.
    pub goal_tol: f64,
}

impl SystemSpec {
    /// The benchmark instance: start at rest at the origin, stop at
    /// `(54, 0)`, obstacle centred at `(27, 6)` with semi-axes 16 and 11.
    pub fn benchmark() -> Self {
        Self {
            obstacle: ObstacleEllipse {
                z_obs: 27.0,
                y_obs: 6.0,
                a_e: 16.0,
                b_e: 11.0,
            },
            accel_bound: 1.0,
            v_max: 8.0,
            start: State::new(0.0, 0.0, 0.0),
            goal: State::new(54.0, 0.0, 0.0),
            goal_tol: 1e-4,
        }
    }

    /// Checks the structural invariants: feasible endpoints and a goal that
    /// is an equilibrium of the unforced system.
    pub fn validate(&self) -> Result<()> {
        ObstacleEllipse::new(
            self.obstacle.z_obs,
            self.obstacle.y_obs,
            self.obstacle.a_e,
            self.obstacle.b_e,
        )?;
        if !(self.accel_bound > 0.0) || !(self.v_max > 0.0) || !(self.goal_tol >= 0.0) {
            return Err(Error::InvalidSpec(
                "accel_bound and v_max must be positive, goal_tol nonnegative".into(),
            ));
        }
        if !self.start.is_finite() || !self.goal.is_finite() {
            return Err(Error::InvalidSpec("start and goal must be finite".into()));
        }
        if !self.check_state(&self.start) {
            return Err(Error::InvalidSpec(format!(
                "start state {:?} is infeasible",
                self.start
            )));
        }
        if !self.check_state(&self.goal) {
            return Err(Error::InvalidSpec(format!(
                "goal state {:?} is infeasible",
                self.goal
            )));
        }
        if step_dynamics(&self.goal, &Input::ZERO) != self.goal {
            return Err(Error::InvalidSpec(
                "goal must be at rest so that zero input keeps it fixed".into(),
            ));
        }
        Ok(())
    }

    /// Outside the obstacle and `0 <= v <= v_max`.
    pub fn check_state(&self, x: &State) -> bool {
        x.is_finite()
            && x.v >= 0.0
            && x.v <= self.v_max
            && self.obstacle.level(x.z, x.y) >= 1.0
    }

    /// `|a| <= s` and `theta` in `[-pi, pi]`.
    pub fn check_input(&self, u: &Input) -> bool {
        u.a.is_finite()
            && u.theta.is_finite()
            && u.a.abs() <= self.accel_bound
            && (-PI..=PI).contains(&u.theta)
    }

    pub fn is_goal(&self, x: &State) -> bool {
        x.max_abs_diff(&self.goal) <= self.goal_tol
    }

    /// Indicator stage cost: 0 at the goal, 1 everywhere else.
    pub fn stage_cost(&self, x: &State) -> u32 {
        u32::from(!self.is_goal(x))
    }
}

/// One step of the discrete-time car model.
///
/// Pure and evaluated in a fixed order, so replaying inputs reproduces
/// stored states bit for bit.
#[inline]
pub fn step_dynamics(x: &State, u: &Input) -> State {
    let (sin, cos) = u.theta.sin_cos();
    State {
        z: x.z + x.v * cos,
        y: x.y + x.v * sin,
        v: x.v + u.a,
    }
}

/// Wraps an angle into `[-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta % (2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    } else if t < -PI {
        t += 2.0 * PI;
    }
    t.clamp(-PI, PI)
}

/// A closed-loop (or seed) execution of the task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<State>,
    /// `inputs[k]` moves `states[k]` to `states[k + 1]`.
    pub inputs: Vec<Input>,
    /// Number of states that are not the goal.
    pub cost: u32,
}

impl Trajectory {
    /// Rolls `inputs` forward from `start` and computes the cost.
    pub fn from_inputs(start: State, inputs: Vec<Input>, spec: &SystemSpec) -> Self {
        let mut states = Vec::with_capacity(inputs.len() + 1);
        states.push(start);
        let mut x = start;
        for u in &inputs {
            x = step_dynamics(&x, u);
            states.push(x);
        }
        let cost = states.iter().map(|x| spec.stage_cost(x)).sum();
        Self {
            states,
            inputs,
            cost,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn first(&self) -> Option<&State> {
        self.states.first()
    }

    pub fn last(&self) -> Option<&State> {
        self.states.last()
    }

    pub fn reaches_goal(&self, spec: &SystemSpec) -> bool {
        self.last().is_some_and(|x| spec.is_goal(x))
    }

    /// Full validity check: exact replay of every stored state, every state
    /// and input feasible, cost equal to the number of non-goal states.
    pub fn validate(&self, spec: &SystemSpec) -> Result<()> {
        let Some(first) = self.states.first() else {
            return Err(Error::InvalidTrajectory("no states".into()));
        };
        if self.inputs.len() + 1 != self.states.len() {
            return Err(Error::InvalidTrajectory(format!(
                "{} states but {} inputs",
                self.states.len(),
                self.inputs.len()
            )));
        }
        let mut x = *first;
        for (k, u) in self.inputs.iter().enumerate() {
            if !spec.check_input(u) {
                return Err(Error::InvalidTrajectory(format!(
                    "input {k} infeasible: {u:?}"
                )));
            }
            x = step_dynamics(&x, u);
            if x != self.states[k + 1] {
                return Err(Error::InvalidTrajectory(format!(
                    "state {} does not replay: stored {:?}, replayed {x:?}",
                    k + 1,
                    self.states[k + 1]
                )));
            }
        }
        for (k, x) in self.states.iter().enumerate() {
            if !spec.check_state(x) {
                return Err(Error::InvalidTrajectory(format!(
                    "state {k} infeasible: {x:?}"
                )));
            }
        }
        let cost: u32 = self.states.iter().map(|x| spec.stage_cost(x)).sum();
        if cost != self.cost {
            return Err(Error::InvalidTrajectory(format!(
                "stored cost {} but {cost} non-goal states",
                self.cost
            )));
        }
        Ok(())
    }
}
