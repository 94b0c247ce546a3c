use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, ValueEnum};
use mmlmpc::experiment::logs::write_logs;
use mmlmpc::experiment::plots::emit_plots;
use mmlmpc::experiment::{
    generate_seed_trajectories, synthetic_bandit_benchmark, AlgorithmChoice, ExperimentConfig, SyntheticConfig,
};
use mmlmpc::lmpc::{run_baseline_observed, run_observed, Algorithm, IterationLog, RunResult};
use mmlmpc::Error;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Mm,
    Baseline,
    Both,
}

impl From<AlgorithmArg> for AlgorithmChoice {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::Mm => AlgorithmChoice::Mm,
            AlgorithmArg::Baseline => AlgorithmChoice::Baseline,
            AlgorithmArg::Both => AlgorithmChoice::Both,
        }
    }
}

/// Multi-modal LMPC benchmark runner.
///
/// Without `--config` the bundled obstacle benchmark is used. Flags
/// override the corresponding config entries.
#[derive(Debug, Parser)]
#[command(name = "mmlmpc", version)]
struct Cli {
    /// TOML experiment config.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    algorithm: Option<AlgorithmArg>,
    /// Number of learning iterations.
    #[arg(long, value_name = "N")]
    iterations: Option<usize>,
    /// Exploration constant of the mode selector.
    #[arg(long, value_name = "K")]
    kappa: Option<f64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Write SVG figures next to the logs.
    #[arg(long)]
    plot: bool,
    /// Only generate and store the seed trajectories.
    #[arg(long)]
    seed_gen: bool,
    /// Run the simulated-arm regret harness instead of the benchmark.
    #[arg(long)]
    synthetic_bandit: bool,
    /// Print one line per iteration to stderr.
    #[arg(long)]
    verbose: bool,
}

enum Failure {
    Config(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Run(e.to_string())
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::benchmark(),
    };
    if let Some(a) = cli.algorithm {
        cfg.run.algorithm = a.into();
    }
    if let Some(n) = cli.iterations {
        cfg.run.iterations = n;
    }
    if let Some(k) = cli.kappa {
        cfg.bandit.kappa = k;
    }
    if let Some(o) = &cli.out {
        cfg.run.out = o.clone();
    }
    cfg.run.plot |= cli.plot;
    cfg.run.verbose |= cli.verbose;
    cfg.validate()?;
    Ok(cfg)
}

fn synthetic(cli: &Cli) -> Result<(), Failure> {
    let mut cfg = SyntheticConfig::gap_five();
    if let Some(k) = cli.kappa {
        if !(k > 0.0) {
            return Err(Failure::Config(format!("kappa must be positive, got {k}")));
        }
        cfg.kappa = k;
    }
    let start = Instant::now();
    let report = synthetic_bandit_benchmark(&cfg);
    let slack_bound = 1.5 * report.log_coefficient;
    println!(
        "synthetic bandit: {} trials, T = {}, kappa = {}",
        cfg.trials, cfg.horizon, cfg.kappa
    );
    println!("  max selection regret / ln T: {:.3}", report.max_selection_ratio);
    println!("  max total regret / ln T:     {:.3}", report.max_regret_ratio);
    println!("  4 kappa^2 / gap:             {:.3} (with 50% slack {slack_bound:.3})", report.log_coefficient);
    for &t in &cfg.checkpoints {
        if let Some(n) = report.max_suboptimal_at(t) {
            println!("  suboptimal pulls at T = {t}: {n}");
        }
    }
    println!("  elapsed: {:.2}s", start.elapsed().as_secs_f64());
    Ok(())
}

fn print_iteration(alg: Algorithm, l: &IterationLog) {
    let sel = l.selected_mode.map(|m| m.to_string()).unwrap_or_else(|| "-".into());
    eprintln!(
        "[{}] j={} selected={} classified={} cost={} candidates={}",
        alg.name(),
        l.j,
        sel,
        l.classified_mode,
        l.cost,
        l.telemetry.candidates_examined
    );
}

fn execute(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let out = &cfg.run.out;
    let seeds = generate_seed_trajectories(&cfg.system, &cfg.lattice, &cfg.seeds)?;
    seeds.persist(&out.join("seeds"))?;
    let seed_vec = seeds.to_vec();
    let run_cfg = cfg.run_config();
    let verbose = cfg.run.verbose;

    let run_one = |alg: Algorithm| -> Result<(RunResult, std::time::Duration), Error> {
        let start = Instant::now();
        let observe = |l: &IterationLog| {
            if verbose {
                print_iteration(alg, l);
            }
        };
        let r = match alg {
            Algorithm::Mm => run_observed(&seed_vec, &run_cfg, observe)?,
            Algorithm::Baseline => run_baseline_observed(&seed_vec, &run_cfg, observe)?,
        };
        Ok((r, start.elapsed()))
    };
    // the two algorithms share nothing, so run them side by side
    let outcomes: Vec<Result<(RunResult, std::time::Duration), Error>> = std::thread::scope(|s| {
        let handles: Vec<_> = cfg
            .run
            .algorithm
            .algorithms()
            .iter()
            .map(|&a| s.spawn(move || run_one(a)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("run thread panicked")).collect()
    });
    let mut results = Vec::new();
    for o in outcomes {
        let (r, wall) = o?;
        write_logs(&r, cfg, &out.join(r.algorithm.name()), wall)?;
        results.push(r);
    }
    if cfg.run.plot {
        let refs: Vec<&RunResult> = results.iter().collect();
        for p in emit_plots(&refs, &cfg.system.obstacle, out)? {
            if verbose {
                eprintln!("wrote {}", p.display());
            }
        }
    }
    println!("seeds: above {}, below {}", seeds.above.cost, seeds.below.cost);
    let row: Vec<String> = results
        .iter()
        .map(|r| match r.final_cost() {
            Some(c) => format!("{}: {c}", r.algorithm.name()),
            None => format!("{}: -", r.algorithm.name()),
        })
        .collect();
    println!("{}", row.join(", "));
    Ok(())
}

fn seed_gen(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let seeds = generate_seed_trajectories(&cfg.system, &cfg.lattice, &cfg.seeds)?;
    let dir = cfg.run.out.join("seeds");
    seeds.persist(&dir)?;
    println!("above: {}, below: {}", seeds.above.cost, seeds.below.cost);
    println!("written to {}", dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = if cli.synthetic_bandit {
        synthetic(&cli)
    } else {
        load_config(&cli).and_then(|cfg| if cli.seed_gen { seed_gen(&cfg) } else { execute(&cfg) })
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
