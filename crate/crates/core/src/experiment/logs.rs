//! Run artifacts.
//!
//! A run directory holds:
//!
//! - `iterations.csv`: one row per iteration.
//! - `trajectories/iter_<j>.csv`: realized trajectory of iteration `j`,
//!   columns `t,z,y,v,theta,a`; the final row carries the goal state and
//!   empty input fields.
//! - `summary.json`: final costs, per-mode statistics and the config echo,
//!   versioned by its `schema` field.
//! - `timing.json`: wall-clock time, kept apart so the other files are
//!   reproducible byte for byte.
//!
//! Every file is written to a temporary sibling and renamed into place.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::clustering::ModeLabel;
use crate::error::{Error, Result};
use crate::experiment::config::ExperimentConfig;
use crate::lmpc::{IterationLog, RunResult};
use crate::model::{Input, SystemSpec, Trajectory};

pub const SCHEMA_VERSION: u32 = 1;

pub const ITERATION_COLUMNS: [&str; 15] = [
    "j",
    "selected_mode",
    "classified_mode",
    "cost",
    "prior_best",
    "prior_n",
    "best",
    "n",
    "lcb",
    "initial_objective",
    "steps",
    "candidates",
    "beam_nodes",
    "closures",
    "structural_wins",
];

pub const TRAJECTORY_COLUMNS: [&str; 6] = ["t", "z", "y", "v", "theta", "a"];

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn encode_stats<T: std::fmt::Display>(map: impl IntoIterator<Item = (ModeLabel, T)>) -> String {
    let mut s = String::new();
    for (m, v) in map {
        if !s.is_empty() {
            s.push(';');
        }
        write!(s, "{m}:{v}").unwrap();
    }
    s
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Config(format!("csv encoding failed: {e}"));
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    w.into_inner().map_err(|e| Error::Config(format!("csv encoding failed: {e}")))
}

fn iteration_row(l: &IterationLog) -> Vec<String> {
    vec![
        l.j.to_string(),
        l.selected_mode.map(|m| m.to_string()).unwrap_or_default(),
        l.classified_mode.to_string(),
        l.cost.to_string(),
        encode_stats(l.prior.iter().map(|(&m, s)| (m, s.0))),
        encode_stats(l.prior.iter().map(|(&m, s)| (m, s.1))),
        encode_stats(l.posterior.iter().map(|(&m, s)| (m, s.0))),
        encode_stats(l.posterior.iter().map(|(&m, s)| (m, s.1))),
        encode_stats(l.lcb_scores.iter().map(|&(m, v)| (m, format!("{v:.6}")))),
        l.initial_objective.to_string(),
        l.telemetry.steps.to_string(),
        l.telemetry.candidates_examined.to_string(),
        l.telemetry.beam_nodes.to_string(),
        l.telemetry.closures.to_string(),
        l.telemetry.structural_wins.to_string(),
    ]
}

pub fn iterations_csv(logs: &[IterationLog]) -> Result<Vec<u8>> {
    csv_bytes(&ITERATION_COLUMNS, logs.iter().map(iteration_row))
}

pub fn trajectory_csv(t: &Trajectory) -> Result<Vec<u8>> {
    let rows = t.states.iter().enumerate().map(|(k, x)| {
        let (theta, a) = match t.inputs.get(k) {
            Some(u) => (u.theta.to_string(), u.a.to_string()),
            None => (String::new(), String::new()),
        };
        vec![k.to_string(), x.z.to_string(), x.y.to_string(), x.v.to_string(), theta, a]
    });
    csv_bytes(&TRAJECTORY_COLUMNS, rows)
}

pub fn write_trajectory_csv(t: &Trajectory, path: &Path) -> Result<()> {
    write_atomic(path, &trajectory_csv(t)?)
}

/// Reads a trajectory file and rebuilds it by replaying its inputs from its
/// first state; the stored states must agree with the replay.
pub fn read_trajectory_csv(path: &Path, spec: &SystemSpec) -> Result<Trajectory> {
    let parse_err = |message: String| Error::Parse {
        path: path.to_path_buf(),
        message,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| parse_err(e.to_string()))?;
    let header = r.headers().map_err(|e| parse_err(e.to_string()))?;
    if header.iter().ne(TRAJECTORY_COLUMNS) {
        return Err(parse_err(format!("unexpected header {header:?}")));
    }
    let mut states = Vec::new();
    let mut inputs = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| parse_err(e.to_string()))?;
        let num = |i: usize| -> Result<f64> {
            rec[i].parse().map_err(|_| parse_err(format!("bad number {:?} in column {}", &rec[i], TRAJECTORY_COLUMNS[i])))
        };
        states.push(crate::model::State::new(num(1)?, num(2)?, num(3)?));
        if !rec[4].is_empty() {
            inputs.push(Input::new(num(4)?, num(5)?));
        }
    }
    let start = *states.first().ok_or_else(|| parse_err("no rows".into()))?;
    let t = Trajectory::from_inputs(start, inputs, spec);
    if t.states != states {
        return Err(parse_err("stored states disagree with the replayed inputs".into()));
    }
    Ok(t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: ModeLabel,
    pub n: usize,
    pub best: u32,
    pub costs: Vec<u32>,
    pub safe_set_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub mode: ModeLabel,
    pub cost: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema: u32,
    pub algorithm: String,
    pub iterations: usize,
    pub final_cost: Option<u32>,
    pub final_mode: Option<ModeLabel>,
    pub seeds: Vec<SeedSummary>,
    pub modes: Vec<ModeSummary>,
    pub costs: Vec<u32>,
    pub config: ExperimentConfig,
}

impl Summary {
    pub fn new(result: &RunResult, config: &ExperimentConfig) -> Self {
        let best = result.best_overall();
        Self {
            schema: SCHEMA_VERSION,
            algorithm: result.algorithm.name().into(),
            iterations: result.iterations.len(),
            final_cost: best.map(|(_, t)| t.cost),
            final_mode: best.map(|(m, _)| m),
            seeds: result
                .seeds
                .iter()
                .map(|(m, t)| SeedSummary { mode: *m, cost: t.cost })
                .collect(),
            modes: result
                .stores
                .iter()
                .map(|s| ModeSummary {
                    mode: s.mode,
                    n: s.n(),
                    best: s.best().unwrap_or(0),
                    costs: s.costs.clone(),
                    safe_set_size: s.safe_set.len(),
                })
                .collect(),
            costs: result.iterations.iter().map(|l| l.cost).collect(),
            config: config.clone(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let s: Self = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if s.schema != SCHEMA_VERSION {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                message: format!("unsupported schema {}", s.schema),
            });
        }
        s.config.validate()?;
        Ok(s)
    }
}

/// Writes every artifact of `result` into `dir`.
pub fn write_logs(result: &RunResult, config: &ExperimentConfig, dir: &Path, wall: Duration) -> Result<()> {
    write_atomic(&dir.join("iterations.csv"), &iterations_csv(&result.iterations)?)?;
    for (log, t) in result.iterations.iter().zip(&result.rollouts) {
        write_trajectory_csv(t, &dir.join("trajectories").join(format!("iter_{}.csv", log.j)))?;
    }
    let summary = serde_json::to_string_pretty(&Summary::new(result, config)).expect("summary serializes");
    write_atomic(&dir.join("summary.json"), summary.as_bytes())?;
    let timing = BTreeMap::from([("wall_seconds", wall.as_secs_f64())]);
    write_atomic(&dir.join("timing.json"), serde_json::to_string(&timing).unwrap().as_bytes())
}
