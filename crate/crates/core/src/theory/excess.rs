use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::oracle::grid_oracle_mc;
use crate::error::{check_dim, Error, Result};
use crate::harness::fmt_f64;
use crate::objectives::{mc_objective_pool, run_chain, ChainConfig, StochasticObjective};
use crate::optimizers::{OptimizerConfig, OptimizerKind};
use crate::rng_stats::mean_and_se;
use crate::SeededRng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExcessRiskConfig {
    pub lambda: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub n_chains: usize,
    /// Iteration counts at which the iterates are scored; the chains run to
    /// the largest.
    pub checkpoints: Vec<usize>,
    pub batch_size: usize,
    pub theta0: Vec<f64>,
    pub oracle_lo: Vec<f64>,
    pub oracle_hi: Vec<f64>,
    pub oracle_grid: usize,
    pub oracle_samples: usize,
}

impl Default for ExcessRiskConfig {
    fn default() -> Self {
        Self {
            lambda: 0.01,
            beta: 1e12,
            epsilon: 1e-8,
            n_chains: 30,
            checkpoints: vec![1_000, 10_000, 100_000],
            batch_size: 1,
            theta0: vec![20.0],
            oracle_lo: vec![-2.0],
            oracle_hi: vec![3.0],
            oracle_grid: 201,
            oracle_samples: 1_000_000,
        }
    }
}

impl ExcessRiskConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.lambda > 0.0) || !(self.beta > 0.0) {
            return Err(Error::config("lambda", "step size and inverse temperature must be positive"));
        }
        if self.n_chains < 2 {
            return Err(Error::config("n_chains", "need at least two chains for a standard error"));
        }
        if self.checkpoints.is_empty() || self.checkpoints.contains(&0) {
            return Err(Error::config("checkpoints", "need positive iteration counts"));
        }
        if self.oracle_samples == 0 {
            return Err(Error::config("oracle_samples", "must be positive"));
        }
        check_dim("theta0", dim, self.theta0.len())?;
        check_dim("oracle_lo", dim, self.oracle_lo.len())?;
        check_dim("oracle_hi", dim, self.oracle_hi.len())
    }
}

/// `E[u(θ_n)] − u*` at one iteration count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcessRiskReport {
    pub n: usize,
    pub u_hat: f64,
    pub u_star: f64,
    pub gap: f64,
    /// Standard error of `u_hat` across chains.
    pub se: f64,
    pub lambda: f64,
    pub beta: f64,
    pub theta_star: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcessRiskCurve {
    pub reports: Vec<ExcessRiskReport>,
}

impl ExcessRiskCurve {
    pub fn at(&self, n: usize) -> Option<&ExcessRiskReport> {
        self.reports.iter().find(|r| r.n == n)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "gap", "se"])?;
        for r in &self.reports {
            w.write_record([r.n.to_string(), fmt_f64(r.gap), fmt_f64(r.se)])?;
        }
        w.flush().map_err(|e| Error::io("excess risk csv", e))?;
        Ok(())
    }
}

/// Runs independent e-THεO POULA chains and scores their iterates against
/// a brute-force minimum. Iterates and the oracle are evaluated on the same
/// sample pool, so the gap carries no pool-to-pool noise.
pub fn excess_risk_experiment<O: StochasticObjective>(objective: &O, cfg: &ExcessRiskConfig, seed: u64) -> Result<ExcessRiskCurve> {
    cfg.validate(objective.dim())?;
    let mut root = SeededRng::new(seed);
    let mut oracle_rng = root.split();
    let (oracle, pool) = grid_oracle_mc(objective, &cfg.oracle_lo, &cfg.oracle_hi, cfg.oracle_grid, cfg.oracle_samples, &mut oracle_rng)?;
    let mut checkpoints = cfg.checkpoints.clone();
    checkpoints.sort_unstable();
    checkpoints.dedup();
    let last = *checkpoints.last().expect("validated non-empty");
    let chain = ChainConfig {
        kind: OptimizerKind::EtheoPoula,
        optimizer: OptimizerConfig::default()
            .with_lambda(cfg.lambda)
            .with_beta(cfg.beta)
            .with_epsilon(cfg.epsilon)
            .with_r(objective.r()),
        n_steps: last,
        batch_size: cfg.batch_size,
    };
    let rngs: Vec<SeededRng> = (0..cfg.n_chains).map(|_| root.split()).collect();
    // per chain: the iterate at every checkpoint
    let snapshots: Vec<Vec<Vec<f64>>> = rngs
        .into_par_iter()
        .map(|mut rng| {
            let mut snaps = Vec::with_capacity(checkpoints.len());
            run_chain(objective, &chain, &cfg.theta0, &mut rng, |step, theta| {
                if checkpoints.binary_search(&step).is_ok() {
                    snaps.push(theta.to_vec());
                }
            })?;
            Ok(snaps)
        })
        .collect::<Result<_>>()?;
    let reports = checkpoints
        .iter()
        .enumerate()
        .map(|(c, &n)| {
            let values: Vec<f64> = snapshots
                .par_iter()
                .map(|snaps| mc_objective_pool(&snaps[c], objective, &pool).mean)
                .collect();
            if let Some(v) = values.iter().find(|v| !v.is_finite()) {
                return Err(Error::NumericalFailure(format!("objective {v} at iteration {n}")));
            }
            let (u_hat, se) = mean_and_se(&values);
            Ok(ExcessRiskReport {
                n,
                u_hat,
                u_star: oracle.value,
                gap: u_hat - oracle.value,
                se,
                lambda: cfg.lambda,
                beta: cfg.beta,
                theta_star: oracle.theta.clone(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(ExcessRiskCurve { reports })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{QuantileSpec, ScalarDist};

    #[test]
    fn gap_is_small_nonnegative_and_shrinks() {
        let spec = QuantileSpec::new(0.5, 0.1, 0.0, ScalarDist::UNIT_UNIFORM).unwrap();
        let cfg = ExcessRiskConfig {
            n_chains: 8,
            checkpoints: vec![200, 5_000],
            oracle_samples: 50_000,
            oracle_grid: 101,
            ..ExcessRiskConfig::default()
        };
        let curve = excess_risk_experiment(&spec, &cfg, 3).unwrap();
        let early = curve.at(200).unwrap();
        let late = curve.at(5_000).unwrap();
        for r in &curve.reports {
            assert!(r.gap >= -3.0 * r.se, "{r:?}");
        }
        // θ* = 0.5 / 1.1 for the regularized median
        assert!((late.theta_star[0] - 0.5 / 1.1).abs() < 0.01);
        assert!(late.gap < 0.01, "{late:?}");
        assert!(early.gap > late.gap);
        assert_eq!(curve, excess_risk_experiment(&spec, &cfg, 3).unwrap());
    }

    #[test]
    fn rejects_mismatched_start() {
        let spec = QuantileSpec::new(0.5, 0.1, 0.0, ScalarDist::UNIT_UNIFORM).unwrap();
        let cfg = ExcessRiskConfig { theta0: vec![0.0, 0.0], ..ExcessRiskConfig::default() };
        assert!(excess_risk_experiment(&spec, &cfg, 1).is_err());
    }
}
