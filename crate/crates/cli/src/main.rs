use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use poula_core::harness::verify::{parse_suites, run_suites, Suite};
use poula_core::harness::{exit_code, output_dir, run, sweep, ExperimentConfig};
use poula_core::Error;

/// Tamed Langevin optimizer experiments.
#[derive(Debug, Parser)]
#[command(name = "poula", version)]
struct Cli {
    /// Replaces the config's seed list (repeatable).
    #[arg(long, global = true)]
    seed: Vec<u64>,
    /// Worker threads for sweeps and Monte Carlo evaluation.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory (default: the config's `output_dir`, else `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one configuration for each seed.
    Run { config: PathBuf },
    /// Run every point of the config's grid and report the best.
    Sweep { config: PathBuf },
    /// Run property suites (`all` or a suite tag).
    Verify {
        suite: Option<String>,
        /// List the suites without running them.
        #[arg(long)]
        list: bool,
    },
}

fn load(path: &Path, cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::from_path(path)?;
    if !cli.seed.is_empty() {
        cfg.seeds = cli.seed.clone();
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    Ok(cfg)
}

fn cmd_run(path: &Path, cli: &Cli) -> Result<(), Error> {
    let cfg = load(path, cli)?;
    let out = output_dir(&cfg, cli.out.as_deref());
    let result = run(&cfg, &out)?;
    for s in &result.seeds {
        match &s.record {
            Some(r) => println!(
                "{} seed {}: best test score {:.6} at epoch {} ({:.1} s)",
                cfg.experiment.tag(),
                s.seed,
                r.summary.best_test_score,
                r.summary.best_epoch,
                r.summary.total_wall_ms / 1e3
            ),
            None => println!("{} seed {}: score {:.6}", cfg.experiment.tag(), s.seed, s.score),
        }
    }
    println!("wrote {}", out.join("summary.json").display());
    Ok(())
}

fn cmd_sweep(path: &Path, cli: &Cli) -> Result<(), Error> {
    let cfg = load(path, cli)?;
    let out = output_dir(&cfg, cli.out.as_deref());
    let report = sweep(&cfg, &out)?;
    for (i, c) in report.configs.iter().enumerate() {
        let marker = if i == report.best { "*" } else { " " };
        println!("{marker} config_{i} {} {} mean score {:.6}", c.optimizer, c.optimizer_config, c.mean_score);
    }
    println!("best: config_{} ({:.6})", report.best, report.best_score);
    println!("wrote {}", out.join("summary.json").display());
    Ok(())
}

fn cmd_verify(suite: Option<&str>, list: bool) -> Result<bool, Error> {
    if list {
        for s in Suite::ALL {
            println!("{:<16} {}", s.tag(), s.description());
        }
        return Ok(true);
    }
    let suites = parse_suites(suite.unwrap_or("all"))?;
    let mut first_failure = None;
    for report in run_suites(&suites) {
        for c in &report.checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            println!("{status} {}: {} [{}]", report.suite, c.name, c.detail);
            if !c.passed && first_failure.is_none() {
                first_failure = Some(format!("{}: {}", report.suite, c.name));
            }
        }
        println!("     {} finished in {:.0} ms", report.suite, report.elapsed_ms);
    }
    match first_failure {
        Some(name) => {
            eprintln!("verify failed: {name}");
            Ok(false)
        }
        None => Ok(true),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config } => cmd_run(config, &cli).map(|_| true),
        Command::Sweep { config } => cmd_sweep(config, &cli).map(|_| true),
        Command::Verify { suite, list } => {
            if let Some(n) = cli.threads {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("could not size the thread pool: {e}");
                }
            }
            cmd_verify(suite.as_deref(), *list)
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
