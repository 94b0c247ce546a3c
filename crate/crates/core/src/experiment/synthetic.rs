//! The mode selector against simulated arms, without any MPC.
//!
//! Arm `m` returns `c*_m + floor(A_m * r_m^k)` on its `k`-th pull (the
//! first pull, `k = 0`, plays the role of the seed), so every arm improves
//! geometrically and its excess over `c*_m` is summable. Trials differ by a
//! random relabelling of the arms and a random amplitude scale in
//! `(0, 1]`, which changes tie-breaking and the early improvement pattern.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandit::BanditState;
use crate::clustering::ModeLabel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticArm {
    pub c_star: u32,
    pub amplitude: f64,
    pub ratio: f64,
}

impl SyntheticArm {
    pub fn new(c_star: u32, amplitude: f64, ratio: f64) -> Self {
        assert!((0.0..1.0).contains(&ratio), "ratio must lie in [0, 1)");
        assert!(amplitude >= 0.0);
        Self { c_star, amplitude, ratio }
    }

    pub fn cost(&self, k: usize) -> u32 {
        self.c_star + (self.amplitude * self.ratio.powi(k as i32)).floor() as u32
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub arms: Vec<SyntheticArm>,
    pub kappa: f64,
    pub horizon: usize,
    pub trials: usize,
    pub seed: u64,
    /// Times at which suboptimal pull counts are recorded.
    pub checkpoints: Vec<usize>,
}

impl SyntheticConfig {
    /// Two arms with gap 5, matching the regret experiment.
    pub fn gap_five() -> Self {
        Self {
            arms: vec![SyntheticArm::new(40, 5.0, 0.5), SyntheticArm::new(45, 5.0, 0.5)],
            kappa: 5.0,
            horizon: 10_000,
            trials: 20,
            seed: 7,
            checkpoints: vec![1_000, 10_000],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    /// `sum_t (c_t - c*)` over the `horizon` selections.
    pub regret: i64,
    /// `sum_t (c*_{m_t} - c*)`.
    pub selection_regret: i64,
    /// Pulls per arm index, seeds excluded.
    pub pulls: Vec<usize>,
    /// Pulls of arms with a positive gap at each checkpoint.
    pub suboptimal_at: BTreeMap<usize, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticReport {
    pub config: SyntheticConfig,
    pub trials: Vec<TrialOutcome>,
    /// `sum over positive gaps of 4 kappa^2 / gap`.
    pub log_coefficient: f64,
    pub max_selection_ratio: f64,
    pub max_regret_ratio: f64,
}

impl SyntheticReport {
    /// Largest suboptimal pull count at checkpoint `t` over all trials.
    pub fn max_suboptimal_at(&self, t: usize) -> Option<usize> {
        self.trials.iter().filter_map(|o| o.suboptimal_at.get(&t).copied()).max()
    }
}

fn gaps(arms: &[SyntheticArm]) -> Vec<u32> {
    let best = arms.iter().map(|a| a.c_star).min().unwrap_or(0);
    arms.iter().map(|a| a.c_star - best).collect()
}

pub fn run_trial(cfg: &SyntheticConfig, trial: usize) -> TrialOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(trial as u64));
    let mut labels: Vec<u32> = (1..=cfg.arms.len() as u32).collect();
    labels.shuffle(&mut rng);
    let arms: Vec<SyntheticArm> = cfg
        .arms
        .iter()
        .map(|a| SyntheticArm {
            amplitude: a.amplitude * (1.0 - rng.random::<f64>()),
            ..*a
        })
        .collect();
    let gap = gaps(&arms);
    let c_best = arms.iter().map(|a| a.c_star).min().unwrap_or(0);
    let index_of: BTreeMap<ModeLabel, usize> = labels.iter().enumerate().map(|(i, &l)| (ModeLabel(l), i)).collect();

    let mut bandit = BanditState::new(cfg.kappa);
    let mut k = vec![0usize; arms.len()];
    for (i, a) in arms.iter().enumerate() {
        bandit.record_outcome(ModeLabel(labels[i]), a.cost(0));
        k[i] = 1;
    }
    let mut out = TrialOutcome {
        regret: 0,
        selection_regret: 0,
        pulls: vec![0; arms.len()],
        suboptimal_at: BTreeMap::new(),
    };
    for t in 1..=cfg.horizon {
        let m = bandit.select_mode().expect("arms exist");
        let i = index_of[&m];
        let c = arms[i].cost(k[i]);
        k[i] += 1;
        bandit.record_outcome(m, c);
        out.pulls[i] += 1;
        out.regret += i64::from(c) - i64::from(c_best);
        out.selection_regret += i64::from(gap[i]);
        if cfg.checkpoints.contains(&t) {
            let sub = out.pulls.iter().zip(&gap).filter(|(_, &g)| g > 0).map(|(p, _)| p).sum();
            out.suboptimal_at.insert(t, sub);
        }
    }
    out
}

pub fn synthetic_bandit_benchmark(cfg: &SyntheticConfig) -> SyntheticReport {
    let trials: Vec<TrialOutcome> = (0..cfg.trials).into_par_iter().map(|i| run_trial(cfg, i)).collect();
    let log_coefficient = gaps(&cfg.arms)
        .iter()
        .filter(|&&g| g > 0)
        .map(|&g| 4.0 * cfg.kappa * cfg.kappa / f64::from(g))
        .sum();
    let ln_t = (cfg.horizon as f64).ln();
    let ratio = |f: fn(&TrialOutcome) -> i64| trials.iter().map(|o| f(o) as f64 / ln_t).fold(0.0, f64::max);
    SyntheticReport {
        max_selection_ratio: ratio(|o| o.selection_regret),
        max_regret_ratio: ratio(|o| o.regret),
        log_coefficient,
        trials,
        config: cfg.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(arms: Vec<SyntheticArm>) -> SyntheticConfig {
        SyntheticConfig {
            arms,
            horizon: 2_000,
            trials: 4,
            checkpoints: vec![2_000],
            ..SyntheticConfig::gap_five()
        }
    }

    #[test]
    fn arm_costs_decay_to_optimum() {
        let a = SyntheticArm::new(40, 5.0, 0.5);
        let seq: Vec<u32> = (0..5).map(|k| a.cost(k)).collect();
        assert_eq!(seq, vec![45, 42, 41, 40, 40]);
    }

    #[test]
    fn one_arm_regret_is_its_improvement_sum() {
        let a = SyntheticArm::new(40, 5.0, 0.5);
        let r = synthetic_bandit_benchmark(&small(vec![a]));
        let cap: f64 = (0..64).map(|k| 5.0 * 0.5f64.powi(k)).sum();
        for t in &r.trials {
            assert_eq!(t.selection_regret, 0);
            assert!((t.regret as f64) <= cap);
        }
    }

    #[test]
    fn zero_gap_has_no_selection_regret() {
        let a = SyntheticArm::new(40, 5.0, 0.5);
        let r = synthetic_bandit_benchmark(&small(vec![a, a]));
        assert!(r.trials.iter().all(|t| t.selection_regret == 0));
        assert_eq!(r.log_coefficient, 0.0);
    }

    #[test]
    fn trials_are_reproducible() {
        let cfg = small(vec![SyntheticArm::new(40, 5.0, 0.5), SyntheticArm::new(45, 5.0, 0.5)]);
        assert_eq!(synthetic_bandit_benchmark(&cfg), synthetic_bandit_benchmark(&cfg));
    }
}
