use serde::{Deserialize, Serialize};

use super::{regularizer_grad, StochasticObjective};
use crate::optimizers::{GradPair, Optimizer, OptimizerConfig, OptimizerKind};
use crate::{Result, SeededRng};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub kind: OptimizerKind,
    pub optimizer: OptimizerConfig,
    pub n_steps: usize,
    pub batch_size: usize,
}

/// Runs one optimizer chain from `theta0`, drawing a fresh minibatch each
/// step. `observe(step, θ)` is called after every update (steps are
/// 1-based). Returns the final iterate.
pub fn run_chain<O, F>(
    objective: &O,
    chain: &ChainConfig,
    theta0: &[f64],
    rng: &mut SeededRng,
    mut observe: F,
) -> Result<Vec<f64>>
where
    O: StochasticObjective,
    F: FnMut(usize, &[f64]),
{
    let d = objective.dim();
    let mut opt = Optimizer::new(chain.kind, chain.optimizer, d)?;
    let mut theta = theta0.to_vec();
    let batch = chain.batch_size.max(1);
    let mut grad = GradPair::zeros(d);
    for step in 1..=chain.n_steps {
        grad.g.iter_mut().for_each(|v| *v = 0.0);
        for _ in 0..batch {
            let x = objective.sample(rng);
            for (acc, v) in grad.g.iter_mut().zip(objective.g(&theta, &x)) {
                *acc += v;
            }
        }
        if batch > 1 {
            grad.g.iter_mut().for_each(|v| *v /= batch as f64);
        }
        grad.f = regularizer_grad(&theta, objective.eta(), objective.r());
        opt.step(&mut theta, &grad, 0, rng);
        observe(step, &theta);
    }
    Ok(theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{QuantileSpec, ScalarDist};

    #[test]
    fn median_chain_converges_and_is_reproducible() {
        let spec = QuantileSpec::new(0.5, 0.0, 0.0, ScalarDist::UNIT_UNIFORM).unwrap();
        let chain = ChainConfig {
            kind: OptimizerKind::EtheoPoula,
            optimizer: OptimizerConfig::default().with_lambda(1e-3).with_beta(1e12),
            n_steps: 20_000,
            batch_size: 8,
        };
        let a = run_chain(&spec, &chain, &[3.0], &mut SeededRng::new(1), |_, _| {}).unwrap();
        let b = run_chain(&spec, &chain, &[3.0], &mut SeededRng::new(1), |_, _| {}).unwrap();
        assert_eq!(a, b);
        assert!((a[0] - 0.5).abs() < 0.02, "{}", a[0]);
    }

    #[test]
    fn observer_sees_every_step() {
        let spec = QuantileSpec::new(0.5, 0.0, 0.0, ScalarDist::UNIT_UNIFORM).unwrap();
        let chain = ChainConfig {
            kind: OptimizerKind::Sgld,
            optimizer: OptimizerConfig::default(),
            n_steps: 17,
            batch_size: 1,
        };
        let mut seen = Vec::new();
        run_chain(&spec, &chain, &[0.0], &mut SeededRng::new(2), |k, _| seen.push(k)).unwrap();
        assert_eq!(seen, (1..=17).collect::<Vec<_>>());
    }
}
