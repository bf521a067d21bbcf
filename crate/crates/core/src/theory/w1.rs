use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::fmt_f64;
use crate::objectives::{run_chain, ChainConfig, StochasticObjective};
use crate::optimizers::{OptimizerConfig, OptimizerKind};
use crate::rng_stats::{build_gibbs_table, empirical_w1_1d, mean_and_se};
use crate::SeededRng;

/// Chains are split into this many groups for the standard error.
const SE_GROUPS: usize = 8;

/// First and second half estimates further apart than this fraction flag
/// a chain that has not reached stationarity.
pub const STATIONARITY_TOLERANCE: f64 = 0.25;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct W1Config {
    pub beta: f64,
    pub lambdas: Vec<f64>,
    pub epsilon: f64,
    pub n_chains: usize,
    pub n_steps: usize,
    /// Fraction of each chain discarded before collecting.
    pub burn_in: f64,
    pub thin: usize,
    pub batch_size: usize,
    pub theta0: f64,
    pub table_lo: f64,
    pub table_hi: f64,
    pub table_points: usize,
    /// Step sizes above this are flagged.
    pub lambda_max: Option<f64>,
}

impl Default for W1Config {
    fn default() -> Self {
        Self {
            beta: 10.0,
            lambdas: vec![0.01, 0.0025],
            epsilon: 1e-8,
            n_chains: 64,
            n_steps: 100_000,
            burn_in: 0.5,
            thin: 10,
            batch_size: 1,
            theta0: 0.5,
            table_lo: -5.0,
            table_hi: 6.0,
            table_points: 20_001,
            lambda_max: None,
        }
    }
}

impl W1Config {
    pub fn validate(&self) -> Result<()> {
        if self.lambdas.is_empty() || self.lambdas.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::config("lambdas", "need at least one positive step size"));
        }
        if self.n_chains < SE_GROUPS {
            return Err(Error::config("n_chains", format!("need at least {SE_GROUPS} chains")));
        }
        if !(0.0..1.0).contains(&self.burn_in) || self.thin == 0 {
            return Err(Error::config("burn_in", "burn-in must lie in [0, 1) and thin must be positive"));
        }
        if self.collected_per_chain() < 2 {
            return Err(Error::config("n_steps", "too few steps left after burn-in and thinning"));
        }
        Ok(())
    }

    fn burn_steps(&self) -> usize {
        (self.burn_in * self.n_steps as f64).round() as usize
    }

    fn collected_per_chain(&self) -> usize {
        (self.n_steps - self.burn_steps()) / self.thin.max(1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct W1Row {
    pub lambda: f64,
    pub w1: f64,
    /// Spread of the estimate across chain groups.
    pub se: f64,
    pub first_half_w1: f64,
    pub second_half_w1: f64,
    pub stationary: bool,
    pub above_lambda_max: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct W1Table {
    pub beta: f64,
    pub rows: Vec<W1Row>,
}

impl W1Table {
    pub fn row(&self, lambda: f64) -> Option<&W1Row> {
        self.rows.iter().find(|r| r.lambda == lambda)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["lambda", "w1", "se"])?;
        for r in &self.rows {
            w.write_record([fmt_f64(r.lambda), fmt_f64(r.w1), fmt_f64(r.se)])?;
        }
        w.flush().map_err(|e| Error::io("w1 csv", e))?;
        Ok(())
    }
}

/// For each step size, runs e-THεO POULA chains on a one-dimensional
/// objective and measures W₁ between the pooled post-burn-in samples and
/// the Gibbs law `∝ exp(−β u)` tabulated from `u`.
pub fn w1_scaling_experiment<O, U>(objective: &O, u: U, cfg: &W1Config, seed: u64) -> Result<W1Table>
where
    O: StochasticObjective,
    U: Fn(f64) -> f64,
{
    cfg.validate()?;
    if objective.dim() != 1 {
        return Err(Error::invalid("objective", "the W1 experiment needs a one-dimensional objective"));
    }
    let table = build_gibbs_table(u, cfg.beta, cfg.table_lo, cfg.table_hi, cfg.table_points)?;
    let burn = cfg.burn_steps();
    let per_chain = cfg.collected_per_chain();
    let mut root = SeededRng::new(seed);
    let mut rows = Vec::with_capacity(cfg.lambdas.len());
    for &lambda in &cfg.lambdas {
        let mut stream = root.split();
        let rngs: Vec<SeededRng> = (0..cfg.n_chains).map(|_| stream.split()).collect();
        let chain = ChainConfig {
            kind: OptimizerKind::EtheoPoula,
            optimizer: OptimizerConfig::default()
                .with_lambda(lambda)
                .with_beta(cfg.beta)
                .with_epsilon(cfg.epsilon)
                .with_r(objective.r()),
            n_steps: cfg.n_steps,
            batch_size: cfg.batch_size,
        };
        let samples: Vec<Vec<f64>> = rngs
            .into_par_iter()
            .map(|mut rng| {
                let mut kept = Vec::with_capacity(per_chain);
                run_chain(objective, &chain, &[cfg.theta0], &mut rng, |step, theta| {
                    if step > burn && (step - burn) % cfg.thin == 0 {
                        kept.push(theta[0]);
                    }
                })?;
                Ok(kept)
            })
            .collect::<Result<_>>()?;
        if samples.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure(format!("chain diverged at lambda = {lambda}")));
        }
        let pooled: Vec<f64> = samples.iter().flatten().copied().collect();
        let w1 = empirical_w1_1d(&pooled, &table);
        let half = |first: bool| -> Vec<f64> {
            samples
                .iter()
                .flat_map(|s| {
                    let mid = s.len() / 2;
                    if first { &s[..mid] } else { &s[mid..] }.iter().copied()
                })
                .collect()
        };
        let first_half_w1 = empirical_w1_1d(&half(true), &table);
        let second_half_w1 = empirical_w1_1d(&half(false), &table);
        let stationary = (first_half_w1 - second_half_w1).abs() <= STATIONARITY_TOLERANCE * first_half_w1.max(second_half_w1);
        if !stationary {
            log::warn!("lambda {lambda}: half-chain W1 estimates {first_half_w1:.4} and {second_half_w1:.4} disagree; chains may not be stationary");
        }
        let group = cfg.n_chains / SE_GROUPS;
        let group_w1: Vec<f64> = (0..SE_GROUPS)
            .map(|g| {
                let s: Vec<f64> = samples[g * group..(g + 1) * group].iter().flatten().copied().collect();
                empirical_w1_1d(&s, &table)
            })
            .collect();
        let (_, se) = mean_and_se(&group_w1);
        let above_lambda_max = cfg.lambda_max.is_some_and(|m| lambda > m);
        if above_lambda_max {
            log::warn!("lambda {lambda} exceeds the step-size bound; convergence is not guaranteed");
        }
        rows.push(W1Row {
            lambda,
            w1,
            se,
            first_half_w1,
            second_half_w1,
            stationary,
            above_lambda_max,
        });
    }
    Ok(W1Table { beta: cfg.beta, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{QuantileSpec, ScalarDist};

    fn small() -> W1Config {
        W1Config {
            lambdas: vec![0.02, 0.005],
            n_chains: 16,
            n_steps: 8_000,
            ..W1Config::default()
        }
    }

    #[test]
    fn reproducible_nonnegative_and_flags_large_steps() {
        let spec = QuantileSpec::new(0.5, 0.1, 0.0, ScalarDist::UNIT_UNIFORM).unwrap();
        let u = |t: f64| spec.exact_objective(t).unwrap();
        let cfg = W1Config { lambda_max: Some(0.01), ..small() };
        let a = w1_scaling_experiment(&spec, u, &cfg, 5).unwrap();
        let b = w1_scaling_experiment(&spec, u, &cfg, 5).unwrap();
        assert_eq!(a, b);
        for r in &a.rows {
            assert!(r.w1 >= 0.0 && r.se >= 0.0);
            assert!(r.w1 < 0.1, "{r:?}");
        }
        assert!(a.rows[0].above_lambda_max && !a.rows[1].above_lambda_max);
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("lambda,w1,se\n"));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn config_errors() {
        let spec = QuantileSpec::new(0.5, 0.1, 0.0, ScalarDist::UNIT_UNIFORM).unwrap();
        let u = |t: f64| spec.exact_objective(t).unwrap();
        for cfg in [
            W1Config { lambdas: vec![], ..small() },
            W1Config { n_chains: 3, ..small() },
            W1Config { thin: 0, ..small() },
            W1Config { burn_in: 1.0, ..small() },
        ] {
            assert!(w1_scaling_experiment(&spec, u, &cfg, 1).is_err());
        }
    }
}
