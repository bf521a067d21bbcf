use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{mc_objective_pool, regularizer_grad, StochasticObjective};
use crate::error::{check_dim, Error, Result};
use crate::harness::{EpochRow, RunRecord};
use crate::optimizers::{GradPair, Optimizer, OptimizerConfig, OptimizerKind};
use crate::SeededRng;

pub const DEFAULT_OBJECTIVE_TEST_SEED: u64 = 0x0b1e_c7ed;

/// Epoch-based stochastic optimization of one of the toy objectives.
/// Every epoch draws `n_train` fresh samples; the test score is `u(θ)` on a
/// fixed pool of `n_test` samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTrainConfig {
    pub optimizer: OptimizerKind,
    pub optimizer_config: OptimizerConfig,
    pub epochs: usize,
    pub n_train: usize,
    pub batch_size: usize,
    pub n_test: usize,
    pub test_seed: u64,
    pub theta0: Vec<f64>,
}

impl ObjectiveTrainConfig {
    pub fn new(theta0: Vec<f64>) -> Self {
        Self {
            optimizer: OptimizerKind::EtheoPoula,
            optimizer_config: OptimizerConfig::default(),
            epochs: 20,
            n_train: 10_000,
            batch_size: 16,
            n_test: 100_000,
            test_seed: DEFAULT_OBJECTIVE_TEST_SEED,
            theta0,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        self.optimizer_config.validate()?;
        check_dim("theta0", dim, self.theta0.len())?;
        for (field, v) in [("epochs", self.epochs), ("n_train", self.n_train), ("batch_size", self.batch_size), ("n_test", self.n_test)] {
            if v == 0 {
                return Err(Error::config(field, "must be positive"));
            }
        }
        if self.theta0.iter().any(|t| !t.is_finite()) {
            return Err(Error::config("theta0", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveRun {
    pub record: RunRecord,
    pub theta: Vec<f64>,
}

pub fn train_objective<O: StochasticObjective>(
    experiment: &str,
    objective: &O,
    cfg: &ObjectiveTrainConfig,
    config_echo: serde_json::Value,
    seed: u64,
) -> Result<ObjectiveRun> {
    let d = objective.dim();
    cfg.validate(d)?;
    let test_pool = objective.sample_n(cfg.n_test, &mut SeededRng::new(cfg.test_seed));
    let mut rng = SeededRng::new(seed);
    let mut data_rng = rng.split();
    let mut noise_rng = rng.split();
    let mut opt = Optimizer::new(cfg.optimizer, cfg.optimizer_config, d)?;
    let mut theta = cfg.theta0.clone();
    let mut record = RunRecord::new(experiment, cfg.optimizer.tag(), seed, config_echo);
    let mut grad = GradPair::zeros(d);
    let mut elapsed = 0.0;
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let mut loss_sum = 0.0;
        let mut steps = 0;
        let mut drawn = 0;
        while drawn < cfg.n_train {
            let b = cfg.batch_size.min(cfg.n_train - drawn);
            drawn += b;
            grad.g.iter_mut().for_each(|v| *v = 0.0);
            let mut batch_loss = 0.0;
            for _ in 0..b {
                let x = objective.sample(&mut data_rng);
                batch_loss += objective.data_loss(&theta, &x);
                for (acc, v) in grad.g.iter_mut().zip(objective.g(&theta, &x)) {
                    *acc += v;
                }
            }
            grad.g.iter_mut().for_each(|v| *v /= b as f64);
            grad.f = regularizer_grad(&theta, objective.eta(), objective.r());
            loss_sum += batch_loss / b as f64 + objective.regularizer(&theta);
            steps += 1;
            opt.step(&mut theta, &grad, epoch, &mut noise_rng);
            if theta.iter().any(|t| !t.is_finite()) {
                return Err(Error::NumericalFailure(format!("non-finite parameters after epoch {epoch}, step {steps}")));
            }
        }
        elapsed += start.elapsed().as_secs_f64() * 1e3;
        let score = mc_objective_pool(&theta, objective, &test_pool);
        record.push(EpochRow {
            epoch: epoch + 1,
            train_loss: loss_sum / steps as f64,
            test_score: score.mean,
            wall_ms: elapsed,
        })?;
    }
    record.finish(elapsed);
    for (i, t) in theta.iter().enumerate() {
        record.extra(&format!("theta_{i}"), *t);
    }
    Ok(ObjectiveRun { record, theta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{QuantileSpec, ScalarDist, VectorQuantizationSpec};

    #[test]
    fn median_run_is_reproducible_and_converges() {
        let spec = QuantileSpec::new(0.5, 0.0, 0.0, ScalarDist::UNIT_UNIFORM).unwrap();
        let mut cfg = ObjectiveTrainConfig::new(vec![2.0]);
        cfg.optimizer_config = cfg.optimizer_config.with_lambda(0.01);
        cfg.epochs = 5;
        cfg.n_test = 10_000;
        let a = train_objective("quantile", &spec, &cfg, serde_json::Value::Null, 4).unwrap();
        let b = train_objective("quantile", &spec, &cfg, serde_json::Value::Null, 4).unwrap();
        assert_eq!(a.theta, b.theta);
        assert!((a.theta[0] - 0.5).abs() < 0.05, "{:?}", a.theta);
        assert_eq!(a.record.rows.len(), 5);
        assert!(a.record.summary.best_test_score < 0.13);
    }

    #[test]
    fn every_optimizer_runs() {
        let spec = VectorQuantizationSpec::new(2, 0.0, 0.0, ScalarDist::UNIT_UNIFORM).unwrap();
        for kind in OptimizerKind::ALL {
            let mut cfg = ObjectiveTrainConfig::new(vec![0.1, 0.9]);
            cfg.optimizer = kind;
            cfg.epochs = 2;
            cfg.n_train = 2_000;
            cfg.n_test = 1_000;
            let run = train_objective("vq", &spec, &cfg, serde_json::Value::Null, 1).unwrap();
            assert!(run.record.summary.best_test_score < 0.1, "{kind}");
        }
    }

    #[test]
    fn rejects_bad_config() {
        let spec = QuantileSpec::new(0.5, 0.0, 0.0, ScalarDist::UNIT_UNIFORM).unwrap();
        let mut cfg = ObjectiveTrainConfig::new(vec![0.0, 1.0]);
        assert!(train_objective("quantile", &spec, &cfg, serde_json::Value::Null, 1).is_err());
        cfg.theta0 = vec![0.0];
        cfg.batch_size = 0;
        assert!(train_objective("quantile", &spec, &cfg, serde_json::Value::Null, 1).is_err());
    }
}
