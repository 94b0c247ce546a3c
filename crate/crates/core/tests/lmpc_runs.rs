use mmlmpc::experiment::{generate_seed_trajectories, ExperimentConfig};
use mmlmpc::lmpc::{initialize_from_seeds, run, run_baseline, Algorithm, RunConfig};
use mmlmpc::safe_set::pooled_union;
use mmlmpc::{Error, Input, ModeLabel, State, Trajectory};

fn bench() -> (RunConfig, Vec<Trajectory>) {
    let cfg = ExperimentConfig::benchmark();
    let seeds = generate_seed_trajectories(&cfg.system, &cfg.lattice, &cfg.seeds).unwrap();
    (cfg.run_config(), seeds.to_vec())
}

#[test]
fn seeds_initialize_one_store_per_side() {
    let (cfg, seeds) = bench();
    let l = initialize_from_seeds(&seeds, &cfg).unwrap();
    assert_eq!(l.mode_count(), 2);
    let a = l.store(ModeLabel::ABOVE).unwrap();
    let b = l.store(ModeLabel::BELOW).unwrap();
    assert_eq!((a.best(), b.best()), (Some(seeds[0].cost), Some(seeds[1].cost)));
    assert_eq!((a.n(), b.n()), (1, 1));
    assert_eq!(l.bandit.j_total(), 2);
}

#[test]
fn single_and_duplicate_seeds() {
    let (cfg, seeds) = bench();
    let one = initialize_from_seeds(&seeds[..1], &cfg).unwrap();
    assert_eq!(one.mode_count(), 1);
    let twice = initialize_from_seeds(&[seeds[0].clone(), seeds[0].clone()], &cfg).unwrap();
    assert_eq!(twice.mode_count(), 1);
    let s = twice.store(ModeLabel::ABOVE).unwrap();
    assert_eq!(s.n(), 2);
    assert_eq!(s.safe_set.entries(), one.store(ModeLabel::ABOVE).unwrap().safe_set.entries());
}

#[test]
fn bad_seed_inputs_are_rejected() {
    let (cfg, seeds) = bench();
    assert!(matches!(initialize_from_seeds(&[], &cfg), Err(Error::NoSeeds)));
    let mut broken = seeds[1].clone();
    broken.states[3].y += 0.5;
    match initialize_from_seeds(&[seeds[0].clone(), broken], &cfg) {
        Err(Error::InvalidSeed { index, .. }) => assert_eq!(index, 1),
        other => panic!("expected InvalidSeed, got {other:?}"),
    }
    let short = Trajectory::from_inputs(State::new(0.0, 0.0, 0.0), vec![Input::new(0.0, 1.0)], &cfg.spec);
    assert!(matches!(
        initialize_from_seeds(&[short], &cfg),
        Err(Error::InvalidSeed { index: 0, .. })
    ));
}

#[test]
fn first_iteration_with_small_kappa_refines_the_cheaper_seed() {
    let (mut cfg, seeds) = bench();
    cfg.kappa = 5.0;
    let mut l = initialize_from_seeds(&seeds, &cfg).unwrap();
    let (log, traj) = l.run_iteration(1, &cfg).unwrap();
    assert_eq!(log.selected_mode, Some(ModeLabel::ABOVE));
    assert!(traj.cost <= seeds[0].cost);
    traj.validate(&cfg.spec).unwrap();
}

#[test]
fn only_the_classified_store_changes() {
    let (mut cfg, seeds) = bench();
    // a long horizon lets the goal search leave the selected side
    cfg.solver.horizon = 10;
    cfg.kappa = 5.0;
    let mut l = initialize_from_seeds(&seeds, &cfg).unwrap();
    let mut crossed = false;
    for j in 1..=3 {
        let before = l.stores.clone();
        let (log, _) = l.run_iteration(j, &cfg).unwrap();
        crossed |= log.selected_mode != Some(log.classified_mode);
        for s in &before {
            let after = l.store(s.mode).unwrap();
            if s.mode == log.classified_mode {
                assert_eq!(after.n(), s.n() + 1);
            } else {
                assert_eq!(after, s, "mode {} changed at j = {j}", s.mode);
            }
        }
    }
    assert!(crossed, "expected a rollout classified away from its selected mode");
}

#[test]
fn zero_iterations_rejected() {
    let (mut cfg, seeds) = bench();
    cfg.iterations = 0;
    assert!(matches!(run(&seeds, &cfg), Err(Error::Config(_))));
    assert!(matches!(run_baseline(&seeds, &cfg), Err(Error::Config(_))));
}

#[test]
fn reruns_are_identical() {
    let (mut cfg, seeds) = bench();
    cfg.iterations = 4;
    let a = run(&seeds, &cfg).unwrap();
    let b = run(&seeds, &cfg).unwrap();
    assert_eq!(a.iterations, b.iterations);
    assert_eq!(a.rollouts, b.rollouts);
}

#[test]
fn single_seed_baseline_matches_single_mode_run() {
    let (mut cfg, seeds) = bench();
    cfg.iterations = 3;
    let mm = run(&seeds[..1], &cfg).unwrap();
    let bl = run_baseline(&seeds[..1], &cfg).unwrap();
    assert_eq!(bl.algorithm, Algorithm::Baseline);
    assert_eq!(mm.rollouts, bl.rollouts);
}

#[test]
fn baseline_uses_the_union_of_everything_seen() {
    let (mut cfg, seeds) = bench();
    cfg.iterations = 3;
    let bl = run_baseline(&seeds, &cfg).unwrap();
    let min_seed = seeds.iter().map(|s| s.cost).min().unwrap();
    assert!(bl.iterations[0].cost <= min_seed);
    assert!(bl.iterations.iter().all(|l| l.selected_mode.is_none()));

    // pooled union equals a set built from all trajectories directly
    let pooled = pooled_union(&bl.stores);
    let mut direct = mmlmpc::SampledSafeSet::new();
    for t in seeds.iter().chain(&bl.rollouts) {
        direct.insert_trajectory(t, &cfg.spec).unwrap();
    }
    assert_eq!(pooled.cost_table(), direct.cost_table());
}
