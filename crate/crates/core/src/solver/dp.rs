//! Exact minimum-time search on a state lattice.
//!
//! Positions and speeds live on a uniform grid of spacing `step`. From a
//! lattice state with speed `v` the car may move along any integer
//! displacement of length exactly `v` (so positions stay on the grid),
//! restricted to the displacements closest to a fixed set of sample
//! headings, and change speed by a multiple of `step` bounded by the
//! acceleration limit. A backward breadth-first search from the goal gives
//! the exact minimum number of steps from every lattice state.

use std::collections::VecDeque;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::clustering::crossing_height;
use crate::error::{Error, Result};
use crate::model::{Input, State, SystemSpec, Trajectory};

/// Clearance kept from the obstacle boundary so that replayed lattice paths
/// (which pick up rounding error from `cos`/`sin`) stay feasible.
const BOUNDARY_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Lattice {
    pub z_min: f64,
    pub z_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    /// Grid spacing shared by position and speed.
    pub step: f64,
    pub v_max: f64,
    /// Number of sample headings on `[-pi, pi)`.
    pub headings: usize,
    /// Number of acceleration levels on `[-s, s]`.
    pub accel_levels: usize,
}

impl Default for Lattice {
    fn default() -> Self {
        Self {
            z_min: 0.0,
            z_max: 60.0,
            y_min: -20.0,
            y_max: 25.0,
            step: 1.0,
            v_max: 8.0,
            headings: 16,
            accel_levels: 3,
        }
    }
}

/// Restriction on where paths may cross the vertical line through the
/// obstacle centre. Clearances are measured from the top or bottom of the
/// ellipse, so a zero clearance only picks the side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Any,
    /// Every crossing strictly higher than `y_obs + b + clearance`.
    Above { clearance: f64 },
    /// Every crossing at or below `y_obs - b - clearance`.
    Below { clearance: f64 },
}

impl Side {
    fn admits(&self, y: f64, y_obs: f64, b: f64) -> bool {
        match *self {
            Side::Any => true,
            Side::Above { clearance } => y > y_obs + b + clearance,
            Side::Below { clearance } => y <= y_obs - b - clearance,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Move {
    dz: i64,
    dy: i64,
    theta: f64,
}

/// Integer vectors of length exactly `r`, snapped to the sample headings.
fn displacements(r: i64, headings: usize) -> Vec<Move> {
    if r == 0 {
        return vec![Move {
            dz: 0,
            dy: 0,
            theta: 0.0,
        }];
    }
    let mut all = Vec::new();
    for dz in -r..=r {
        let rem = r * r - dz * dz;
        let dy = (rem as f64).sqrt().round() as i64;
        if dy * dy != rem {
            continue;
        }
        all.push((dz, dy));
        if dy != 0 {
            all.push((dz, -dy));
        }
    }
    let mut out: Vec<Move> = Vec::new();
    for i in 0..headings {
        let h = -PI + 2.0 * PI * i as f64 / headings as f64;
        let best = all
            .iter()
            .min_by(|a, b| {
                let da = angle_gap((a.1 as f64).atan2(a.0 as f64), h);
                let db = angle_gap((b.1 as f64).atan2(b.0 as f64), h);
                da.total_cmp(&db)
            })
            .copied()
            .unwrap();
        if !out.iter().any(|m| (m.dz, m.dy) == best) {
            out.push(Move {
                dz: best.0,
                dy: best.1,
                theta: (best.1 as f64).atan2(best.0 as f64),
            });
        }
    }
    out
}

fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

/// Minimum steps-to-goal over the lattice, plus path extraction.
#[derive(Debug, Clone)]
pub struct DpOracle {
    spec: SystemSpec,
    lattice: Lattice,
    side: Side,
    nz: i64,
    ny: i64,
    nv: i64,
    moves: Vec<Vec<Move>>,
    accels: Vec<i64>,
    feasible: Vec<bool>,
    values: Vec<u32>,
}

const UNREACHED: u32 = u32::MAX;

impl DpOracle {
    pub fn solve(spec: &SystemSpec, lattice: &Lattice, side: Side) -> Result<Self> {
        if !(lattice.step > 0.0) || lattice.headings == 0 || lattice.accel_levels == 0 {
            return Err(Error::Config(format!("degenerate lattice: {lattice:?}")));
        }
        let h = lattice.step;
        let nz = ((lattice.z_max - lattice.z_min) / h).round() as i64 + 1;
        let ny = ((lattice.y_max - lattice.y_min) / h).round() as i64 + 1;
        let nv = (lattice.v_max.min(spec.v_max) / h).floor() as i64 + 1;
        if nz <= 0 || ny <= 0 {
            return Err(Error::Config(format!("empty lattice: {lattice:?}")));
        }

        let moves = (0..nv).map(|r| displacements(r, lattice.headings)).collect();
        let max_da = (spec.accel_bound / h + 1e-9).floor() as i64;
        let mut accels: Vec<i64> = (0..lattice.accel_levels)
            .map(|i| {
                let a = if lattice.accel_levels == 1 {
                    0.0
                } else {
                    -spec.accel_bound + 2.0 * spec.accel_bound * i as f64 / (lattice.accel_levels - 1) as f64
                };
                ((a / h).round() as i64).clamp(-max_da, max_da)
            })
            .collect();
        accels.dedup();

        let mut oracle = Self {
            spec: spec.clone(),
            lattice: lattice.clone(),
            side,
            nz,
            ny,
            nv,
            moves,
            accels,
            feasible: Vec::new(),
            values: Vec::new(),
        };
        let total = (nz * ny * nv) as usize;
        oracle.feasible = (0..total)
            .map(|i| {
                let x = oracle.state_of(oracle.unindex(i));
                x.v >= 0.0
                    && x.v <= spec.v_max
                    && spec.obstacle.level(x.z, x.y) >= 1.0 + BOUNDARY_MARGIN
            })
            .collect();
        oracle.values = vec![UNREACHED; total];
        oracle.backward_bfs()?;
        Ok(oracle)
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    fn index(&self, (iz, iy, iv): (i64, i64, i64)) -> Option<usize> {
        if (0..self.nz).contains(&iz) && (0..self.ny).contains(&iy) && (0..self.nv).contains(&iv) {
            Some(((iz * self.ny + iy) * self.nv + iv) as usize)
        } else {
            None
        }
    }

    fn unindex(&self, i: usize) -> (i64, i64, i64) {
        let i = i as i64;
        (i / (self.ny * self.nv), (i / self.nv) % self.ny, i % self.nv)
    }

    fn state_of(&self, (iz, iy, iv): (i64, i64, i64)) -> State {
        let h = self.lattice.step;
        State::new(
            self.lattice.z_min + iz as f64 * h,
            self.lattice.y_min + iy as f64 * h,
            iv as f64 * h,
        )
    }

    /// Lattice cell of `x`, if it sits on a grid point.
    fn cell_of(&self, x: &State) -> Option<(i64, i64, i64)> {
        let h = self.lattice.step;
        let snap = |v: f64| {
            let r = (v / h).round();
            ((v / h - r).abs() < 1e-6).then_some(r as i64)
        };
        let c = (
            snap(x.z - self.lattice.z_min)?,
            snap(x.y - self.lattice.y_min)?,
            snap(x.v)?,
        );
        self.index(c).map(|_| c)
    }

    fn edge_ok(&self, from: (i64, i64, i64), to: (i64, i64, i64)) -> bool {
        if matches!(self.side, Side::Any) {
            return true;
        }
        let a = self.state_of(from);
        let b = self.state_of(to);
        let zc = self.spec.obstacle.z_obs;
        let (y_obs, b_half) = (self.spec.obstacle.y_obs, self.spec.obstacle.b_e);
        let touches = a.z == zc || (a.z - zc) * (b.z - zc) < 0.0;
        !touches
            || crossing_height(&[(a.z, a.y), (b.z, b.y)], zc).is_none_or(|y| self.side.admits(y, y_obs, b_half))
    }

    fn backward_bfs(&mut self) -> Result<()> {
        let goal = self
            .cell_of(&self.spec.goal)
            .ok_or_else(|| Error::Config("goal is not a lattice point".into()))?;
        let gi = self.index(goal).unwrap();
        if !self.feasible[gi] {
            return Err(Error::Config("goal is infeasible on the lattice".into()));
        }
        self.values[gi] = 0;
        let mut queue = VecDeque::from([goal]);
        while let Some(to) = queue.pop_front() {
            let vt = self.values[self.index(to).unwrap()];
            for &da in &self.accels {
                let iv = to.2 - da;
                if !(0..self.nv).contains(&iv) {
                    continue;
                }
                for m in &self.moves[iv as usize] {
                    let from = (to.0 - m.dz, to.1 - m.dy, iv);
                    let Some(fi) = self.index(from) else { continue };
                    if !self.feasible[fi] || self.values[fi] != UNREACHED || !self.edge_ok(from, to) {
                        continue;
                    }
                    self.values[fi] = vt + 1;
                    queue.push_back(from);
                }
            }
        }
        Ok(())
    }

    /// Exact lattice minimum time from `x`, `None` if off-lattice or
    /// unreachable.
    pub fn value(&self, x: &State) -> Option<u32> {
        let c = self.cell_of(x)?;
        let v = self.values[self.index(c)?];
        (v != UNREACHED).then_some(v)
    }

    /// Number of lattice states with a finite value.
    pub fn reachable_count(&self) -> usize {
        self.values.iter().filter(|&&v| v != UNREACHED).count()
    }

    /// An optimal lattice path from `from`, replayed through the car model.
    pub fn optimal_path(&self, from: &State) -> Result<Trajectory> {
        let unreachable = || {
            Error::Unreachable(format!(
                "no lattice path from {from:?} (side {:?}); try a finer lattice or more headings",
                self.side
            ))
        };
        let mut cell = self.cell_of(from).ok_or_else(unreachable)?;
        let mut value = self.values[self.index(cell).unwrap()];
        if value == UNREACHED {
            return Err(unreachable());
        }
        let h = self.lattice.step;
        let mut inputs = Vec::with_capacity(value as usize);
        while value > 0 {
            let mut next = None;
            'search: for m in &self.moves[cell.2 as usize] {
                for &da in &self.accels {
                    let to = (cell.0 + m.dz, cell.1 + m.dy, cell.2 + da);
                    let Some(ti) = self.index(to) else { continue };
                    if self.values[ti] == value - 1 && self.feasible[ti] && self.edge_ok(cell, to) {
                        next = Some((to, Input::new(m.theta, da as f64 * h)));
                        break 'search;
                    }
                }
            }
            let (to, u) = next.expect("BFS values are consistent");
            inputs.push(u);
            cell = to;
            value -= 1;
        }
        let traj = Trajectory::from_inputs(*from, inputs, &self.spec);
        traj.validate(&self.spec)?;
        if !traj.reaches_goal(&self.spec) {
            return Err(Error::TrajectoryNotAtGoal(*traj.last().unwrap()));
        }
        Ok(traj)
    }
}
