//! Executes configured experiments and writes their outputs.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use super::config::{ExperimentConfig, ExperimentKind, Job, TransferJob};
use super::record::RunRecord;
use crate::error::{Error, Result};
use crate::gamma_regression::train_gamma;
use crate::objectives::{train_objective, QuantileSpec};
use crate::portfolio::{train_full, train_transfer, PolicyStack};
use crate::theory::{excess_risk_experiment, w1_scaling_experiment, ExcessRiskCurve, W1Table};

/// Process exit code for an error: 2 for configuration and parameter
/// problems, 3 for numerical failures, 1 for I/O.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::InvalidParameter { .. } | Error::DimensionMismatch { .. } | Error::Domain(_) | Error::EndpointMass { .. } => 2,
        Error::NumericalFailure(_) | Error::NotPositiveSemidefinite { .. } => 3,
        Error::Io { .. } | Error::Csv(_) | Error::Json(_) => 1,
    }
}

/// Result of one (job, seed) pair.
#[derive(Clone, Debug)]
pub enum RunOutput {
    Training(RunRecord),
    W1(W1Table),
    Excess(ExcessRiskCurve),
}

impl RunOutput {
    /// Lower is better. Training runs report their best test score, the W₁
    /// table its distance at the smallest step size, the excess-risk curve
    /// its final gap.
    pub fn score(&self) -> f64 {
        match self {
            RunOutput::Training(r) => r.summary.best_test_score,
            RunOutput::W1(t) => t
                .rows
                .iter()
                .min_by(|a, b| a.lambda.total_cmp(&b.lambda))
                .map(|r| r.w1)
                .unwrap_or(f64::NAN),
            RunOutput::Excess(c) => c.reports.last().map(|r| r.gap).unwrap_or(f64::NAN),
        }
    }

    pub fn record(&self) -> Option<&RunRecord> {
        match self {
            RunOutput::Training(r) => Some(r),
            _ => None,
        }
    }
}

fn w1_potential(spec: &QuantileSpec) -> Result<impl Fn(f64) -> f64 + '_> {
    if spec.exact_objective(0.0).is_none() {
        return Err(Error::config("params.data", "the W1 experiment needs uniform data (closed-form objective)"));
    }
    Ok(move |t| spec.exact_objective(t).unwrap_or(f64::NAN))
}

/// Loads a saved frozen stack or trains and freezes one.
pub fn frozen_stack(job: &TransferJob, seed: u64) -> Result<(PolicyStack, Option<RunRecord>)> {
    if let Some(path) = &job.frozen_stack {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut stack: PolicyStack = serde_json::from_str(&text)?;
        stack.freeze();
        return Ok((stack, None));
    }
    let run = train_full(&job.frozen, seed)?;
    let mut stack = run.stack;
    stack.freeze();
    Ok((stack, Some(run.record)))
}

/// Runs one job for one seed. The transfer job also returns the frozen
/// stack so the caller can save it.
pub fn execute(kind: ExperimentKind, job: &Job, seed: u64) -> Result<(RunOutput, Option<PolicyStack>)> {
    let echo = job.echo();
    let tag = kind.tag();
    let out = match job {
        Job::Quantile(s, t) => RunOutput::Training(train_objective(tag, s, t, echo, seed)?.record),
        Job::Vq(s, t) => RunOutput::Training(train_objective(tag, s, t, echo, seed)?.record),
        Job::Cvar(s, t) => RunOutput::Training(train_objective(tag, s, t, echo, seed)?.record),
        Job::Relu(s, t) => RunOutput::Training(train_objective(tag, s, t, echo, seed)?.record),
        Job::Portfolio(c) => {
            let mut record = train_full(c, seed)?.record;
            record.experiment = tag.to_string();
            RunOutput::Training(record)
        }
        Job::Transfer(t) => {
            let (stack, frozen_record) = frozen_stack(t, seed)?;
            let mut record = train_transfer(&t.transfer, &stack, seed)?.record;
            if let Some(fr) = frozen_record {
                record.extra("frozen_best_test_score", fr.summary.best_test_score);
                record.extra("frozen_wall_ms", fr.summary.total_wall_ms);
            }
            record.config = echo;
            return Ok((RunOutput::Training(record), Some(stack)));
        }
        Job::Gamma(c) => RunOutput::Training(train_gamma(c, seed)?.record),
        Job::W1(s, c) => RunOutput::W1(w1_scaling_experiment(s, w1_potential(s)?, c, seed)?),
        Job::Excess(s, c) => RunOutput::Excess(excess_risk_experiment(s, c, seed)?),
    };
    Ok((out, None))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Writes the per-seed files of one run into `dir`:
/// `<experiment>_<seed>.csv` and, for training runs,
/// `<experiment>_<seed>_timing.csv`.
pub fn write_output(dir: &Path, kind: ExperimentKind, seed: u64, out: &RunOutput, frozen: Option<&PolicyStack>) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let stem = format!("{}_{seed}", kind.tag());
    let main = dir.join(format!("{stem}.csv"));
    let mut files = vec![main.clone()];
    match out {
        RunOutput::Training(r) => {
            r.write_metrics_csv(create(&main)?)?;
            let timing = dir.join(format!("{stem}_timing.csv"));
            r.write_timing_csv(create(&timing)?)?;
            files.push(timing);
        }
        RunOutput::W1(t) => t.write_csv(create(&main)?)?,
        RunOutput::Excess(c) => c.write_csv(create(&main)?)?,
    }
    if let Some(stack) = frozen {
        let path = dir.join(format!("{stem}_frozen.json"));
        fs::write(&path, serde_json::to_string(stack)?).map_err(|e| Error::io(&path, e))?;
        files.push(path);
    }
    Ok(files)
}

#[derive(Clone, Debug, Serialize)]
pub struct SeedResult {
    pub seed: u64,
    pub score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record: Option<RunRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table: Option<Value>,
}

impl SeedResult {
    fn new(seed: u64, out: &RunOutput) -> Result<Self> {
        let table = match out {
            RunOutput::Training(_) => None,
            RunOutput::W1(t) => Some(serde_json::to_value(t)?),
            RunOutput::Excess(c) => Some(serde_json::to_value(c)?),
        };
        Ok(Self {
            seed,
            score: out.score(),
            record: out.record().cloned(),
            table,
        })
    }
}

/// All seeds of one configuration.
#[derive(Clone, Debug, Serialize)]
pub struct ConfigResult {
    pub experiment: ExperimentKind,
    pub optimizer: String,
    pub optimizer_config: Value,
    pub mean_score: f64,
    pub seeds: Vec<SeedResult>,
}

fn run_point(cfg: &ExperimentConfig, dir: &Path) -> Result<ConfigResult> {
    let job = cfg.resolve()?;
    job.validate()?;
    let mut seeds = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let (out, frozen) = execute(cfg.experiment, &job, seed)?;
        write_output(dir, cfg.experiment, seed, &out, frozen.as_ref())?;
        seeds.push(SeedResult::new(seed, &out)?);
    }
    let mean_score = seeds.iter().map(|s| s.score).sum::<f64>() / seeds.len() as f64;
    let optimizer_config = match &job {
        Job::Quantile(_, t) | Job::Vq(_, t) | Job::Cvar(_, t) | Job::Relu(_, t) => serde_json::to_value(t.optimizer_config)?,
        Job::Portfolio(c) => serde_json::to_value(c.optimizer_config)?,
        Job::Transfer(t) => serde_json::to_value(t.transfer.optimizer_config)?,
        Job::Gamma(c) => serde_json::to_value(c.optimizer_config)?,
        Job::W1(_, c) => json!({ "lambdas": c.lambdas, "epsilon": c.epsilon, "beta": c.beta }),
        Job::Excess(_, c) => json!({ "lambda": c.lambda, "epsilon": c.epsilon, "beta": c.beta }),
    };
    Ok(ConfigResult {
        experiment: cfg.experiment,
        optimizer: job.optimizer().tag().to_string(),
        optimizer_config,
        mean_score,
        seeds,
    })
}

fn in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::config("threads", e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

fn write_summary(dir: &Path, value: &Value) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(value)? + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Output directory: the explicit override, else the config's, else `out`.
pub fn output_dir(cfg: &ExperimentConfig, out: Option<&Path>) -> PathBuf {
    out.map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// Runs every seed of a single configuration. A config carrying a grid is
/// rejected; use [`sweep`].
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<ConfigResult> {
    if !cfg.grid.blocks().is_empty() {
        return Err(Error::config("grid", "`run` takes a single configuration; use `sweep` for grids"));
    }
    cfg.validate()?;
    let result = in_pool(cfg.threads, || run_point(cfg, out))??;
    write_summary(out, &serde_json::to_value(&result)?)?;
    Ok(result)
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub experiment: ExperimentKind,
    pub configs: Vec<ConfigResult>,
    /// Index into `configs` of the lowest mean score.
    pub best: usize,
    pub best_score: f64,
    /// Per config and seed: first time within 1% of the lowest best score
    /// of the whole sweep (training experiments only).
    pub time_to_1pct_of_sweep_best_ms: Vec<Vec<Option<f64>>>,
}

/// Runs the Cartesian product of the config's grids. Configurations run in
/// parallel and are reported in declaration order. Each goes to its own
/// `config_<i>` subdirectory.
pub fn sweep(cfg: &ExperimentConfig, out: &Path) -> Result<SweepReport> {
    cfg.validate()?;
    let points = cfg.sweep_points()?;
    let results = in_pool(cfg.threads, || {
        points
            .par_iter()
            .enumerate()
            .map(|(i, p)| run_point(p, &out.join(format!("config_{i}"))))
            .collect::<Vec<_>>()
    })?;
    let configs = results.into_iter().collect::<Result<Vec<_>>>()?;
    let (best, best_score) = configs
        .iter()
        .enumerate()
        .map(|(i, c)| (i, c.mean_score))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one configuration");
    let lowest = configs
        .iter()
        .flat_map(|c| c.seeds.iter().filter_map(|s| s.record.as_ref()))
        .map(|r| r.summary.best_test_score)
        .fold(f64::INFINITY, f64::min);
    let time_to_1pct_of_sweep_best_ms = configs
        .iter()
        .map(|c| {
            c.seeds
                .iter()
                .map(|s| s.record.as_ref().and_then(|r| r.time_to_within(lowest, 0.01)))
                .collect()
        })
        .collect();
    let report = SweepReport {
        experiment: cfg.experiment,
        configs,
        best,
        best_score,
        time_to_1pct_of_sweep_best_ms,
    };
    write_summary(out, &serde_json::to_value(&report)?)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_quantile() -> ExperimentConfig {
        ExperimentConfig::from_toml(
            "experiment = \"quantile\"\nseeds = [1]\nepochs = 2\nn_train = 200\nn_test = 2000\n[params]\nq = 0.9\n",
        )
        .unwrap()
    }

    #[test]
    fn run_is_byte_reproducible() {
        let cfg = quick_quantile();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run(&cfg, a.path()).unwrap();
        run(&cfg, b.path()).unwrap();
        let read = |d: &Path| fs::read(d.join("quantile_1.csv")).unwrap();
        assert_eq!(read(a.path()), read(b.path()));
        assert!(a.path().join("summary.json").exists());
        assert!(a.path().join("quantile_1_timing.csv").exists());
    }

    #[test]
    fn sweep_of_one_matches_run() {
        let mut cfg = quick_quantile();
        cfg.optimizer_config = Some(serde_json::from_str(r#"{"lambda": 0.1}"#).unwrap());
        let dir = tempfile::tempdir().unwrap();
        let single = run(&cfg, dir.path()).unwrap();
        cfg.grid = ExperimentConfig::from_toml("experiment = \"quantile\"\n[grid]\nlambda = [0.1]\n").unwrap().grid;
        let report = sweep(&cfg, dir.path()).unwrap();
        assert_eq!(report.configs.len(), 1);
        assert_eq!(report.best, 0);
        let rows = |c: &ConfigResult| c.seeds[0].record.as_ref().unwrap().rows.iter().map(|r| r.test_score).collect::<Vec<_>>();
        assert_eq!(rows(&single), rows(&report.configs[0]));
    }

    #[test]
    fn grid_cardinality_and_best_pointer() {
        let mut cfg = quick_quantile();
        cfg.grid = ExperimentConfig::from_toml(
            "experiment = \"quantile\"\n[grid]\nlambda = [0.1, 0.05, 0.01]\nepsilon = [1e-2, 1e-4, 1e-8, 1e-12]\n",
        )
        .unwrap()
        .grid;
        let dir = tempfile::tempdir().unwrap();
        let report = sweep(&cfg, dir.path()).unwrap();
        assert_eq!(report.configs.len(), 12);
        let min = report.configs.iter().map(|c| c.mean_score).fold(f64::INFINITY, f64::min);
        assert_eq!(report.best_score, min);
        assert_eq!(report.configs[report.best].mean_score, min);
        assert!(dir.path().join("config_11").join("quantile_1.csv").exists());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::config("optimizer", "bad")), 2);
        assert_eq!(exit_code(&Error::NumericalFailure("nan".into())), 3);
        assert_eq!(exit_code(&Error::io("x", std::io::Error::other("y"))), 1);
    }

    #[test]
    fn grid_rejected_by_run() {
        let mut cfg = quick_quantile();
        cfg.grid = ExperimentConfig::from_toml("experiment = \"quantile\"\n[grid]\nlambda = [0.1]\n").unwrap().grid;
        assert!(matches!(run(&cfg, Path::new("unused")), Err(Error::Config { .. })));
    }
}
