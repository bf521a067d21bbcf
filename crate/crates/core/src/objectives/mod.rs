//! Stochastic objectives with a discontinuous loss gradient `G` and a
//! polynomial regularizer gradient `F = ηθ|θ|^{2r}`.

mod chain;
mod cvar;
mod dist;
mod quantile;
mod relu;
mod train;
mod vq;

use crate::optimizers::GradPair;
use crate::rng_stats::mean_and_se;
use crate::SeededRng;

pub use chain::{run_chain, ChainConfig};
pub use cvar::{cvar_gradpair, softmax, CvarSpec};
pub use dist::ScalarDist;
pub use quantile::{pinball, quantile_gradpair, QuantileSpec};
pub use relu::{relu_regression_gradpair, ReluRegressionSpec, ReluSample};
pub use train::{train_objective, ObjectiveRun, ObjectiveTrainConfig, DEFAULT_OBJECTIVE_TEST_SEED};
pub use vq::{nearest_code, vq_gradpair, VectorQuantizationSpec};

/// `η|θ|^{2(r+1)} / (2(r+1))`.
pub fn regularizer_value(theta: &[f64], eta: f64, r: f64) -> f64 {
    if eta == 0.0 {
        return 0.0;
    }
    let norm_sq: f64 = theta.iter().map(|t| t * t).sum();
    eta * norm_sq.powf(r + 1.0) / (2.0 * (r + 1.0))
}

/// `ηθ|θ|^{2r}`, the gradient of [`regularizer_value`].
pub fn regularizer_grad(theta: &[f64], eta: f64, r: f64) -> Vec<f64> {
    if eta == 0.0 {
        return vec![0.0; theta.len()];
    }
    let norm_sq: f64 = theta.iter().map(|t| t * t).sum();
    let scale = eta * if r == 0.0 { 1.0 } else { norm_sq.powf(r) };
    theta.iter().map(|t| scale * t).collect()
}

/// A loss `U(θ, x) = loss(θ, x) + regularizer(θ)` over i.i.d. data `x`.
pub trait StochasticObjective: Send + Sync {
    type Sample: Clone + Send + Sync;

    fn dim(&self) -> usize;

    fn sample(&self, rng: &mut SeededRng) -> Self::Sample;

    /// Per-sample data loss, without the regularizer.
    fn data_loss(&self, theta: &[f64], x: &Self::Sample) -> f64;

    /// The discontinuous gradient part `G(θ, x)`.
    fn g(&self, theta: &[f64], x: &Self::Sample) -> Vec<f64>;

    fn eta(&self) -> f64;

    fn r(&self) -> f64;

    fn regularizer(&self, theta: &[f64]) -> f64 {
        regularizer_value(theta, self.eta(), self.r())
    }

    fn gradpair(&self, theta: &[f64], x: &Self::Sample) -> GradPair {
        GradPair {
            g: self.g(theta, x),
            f: regularizer_grad(theta, self.eta(), self.r()),
        }
    }

    fn sample_n(&self, n: usize, rng: &mut SeededRng) -> Vec<Self::Sample> {
        (0..n).map(|_| self.sample(rng)).collect()
    }
}

/// Monte Carlo estimate of `u(θ)` with the standard error of its data part.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub se: f64,
}

/// Estimates `u(θ) = E[U(θ, X)]` from `n_samples` fresh draws.
pub fn mc_objective<O: StochasticObjective>(
    theta: &[f64],
    objective: &O,
    n_samples: usize,
    rng: &mut SeededRng,
) -> McEstimate {
    assert!(n_samples >= 1, "n_samples must be positive");
    let losses: Vec<f64> = (0..n_samples)
        .map(|_| objective.data_loss(theta, &objective.sample(rng)))
        .collect();
    let (mean, se) = mean_and_se(&losses);
    McEstimate {
        mean: mean + objective.regularizer(theta),
        se,
    }
}

/// As [`mc_objective`] over a fixed pool (common random numbers).
pub fn mc_objective_pool<O: StochasticObjective>(
    theta: &[f64],
    objective: &O,
    pool: &[O::Sample],
) -> McEstimate {
    assert!(!pool.is_empty(), "empty sample pool");
    let losses: Vec<f64> = pool.iter().map(|x| objective.data_loss(theta, x)).collect();
    let (mean, se) = mean_and_se(&losses);
    McEstimate {
        mean: mean + objective.regularizer(theta),
        se,
    }
}

/// Mean gradient pair over a pool, with per-component standard errors of
/// the `G` part.
pub fn mean_gradpair_pool<O: StochasticObjective>(
    theta: &[f64],
    objective: &O,
    pool: &[O::Sample],
) -> (GradPair, Vec<f64>) {
    let d = objective.dim();
    let n = pool.len() as f64;
    let mut sum = vec![0.0; d];
    let mut sum_sq = vec![0.0; d];
    for x in pool {
        for (i, v) in objective.g(theta, x).into_iter().enumerate() {
            sum[i] += v;
            sum_sq[i] += v * v;
        }
    }
    let g: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let se = sum_sq
        .iter()
        .zip(&g)
        .map(|(sq, m)| ((sq / n - m * m).max(0.0) / (n - 1.0).max(1.0)).sqrt())
        .collect();
    let f = regularizer_grad(theta, objective.eta(), objective.r());
    (GradPair { g, f }, se)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    struct Constant;

    impl StochasticObjective for Constant {
        type Sample = f64;
        fn dim(&self) -> usize {
            1
        }
        fn sample(&self, rng: &mut SeededRng) -> f64 {
            rng.uniform()
        }
        fn data_loss(&self, _: &[f64], _: &f64) -> f64 {
            3.25
        }
        fn g(&self, _: &[f64], _: &f64) -> Vec<f64> {
            vec![0.0]
        }
        fn eta(&self) -> f64 {
            0.0
        }
        fn r(&self) -> f64 {
            0.0
        }
    }

    #[test]
    fn constant_loss_is_exact() {
        let est = mc_objective(&[0.7], &Constant, 1000, &mut SeededRng::new(1));
        assert_eq!(est.mean, 3.25);
        assert_eq!(est.se, 0.0);
    }

    #[test]
    fn standard_error_scales_with_sample_size() {
        let spec = QuantileSpec::new(0.3, 0.0, 0.0, ScalarDist::Uniform { lo: 0.0, hi: 1.0 }).unwrap();
        let a = mc_objective(&[0.4], &spec, 100_000, &mut SeededRng::new(2));
        let b = mc_objective(&[0.4], &spec, 200_000, &mut SeededRng::new(3));
        let ratio = a.se / b.se;
        assert!((ratio - 2f64.sqrt()).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn regularizer_hand_values() {
        // η=2, r=1, |θ|²=5: 2·25/4
        assert!((regularizer_value(&[1.0, 2.0], 2.0, 1.0) - 12.5).abs() < 1e-12);
        assert_eq!(regularizer_grad(&[1.0, 2.0], 2.0, 1.0), vec![10.0, 20.0]);
        assert_eq!(regularizer_grad(&[0.0], 1.0, 0.0), vec![0.0]);
    }

    proptest! {
        #[test]
        fn regularizer_gradient_matches_finite_differences(
            theta in proptest::collection::vec(-3.0f64..3.0, 1..5),
            eta in 0.01f64..5.0,
            r in 0.0f64..2.0,
        ) {
            let norm: f64 = theta.iter().map(|t| t * t).sum::<f64>().sqrt();
            prop_assume!(norm > 0.1);
            let grad = regularizer_grad(&theta, eta, r);
            for i in 0..theta.len() {
                let h = 1e-6 * (1.0 + theta[i].abs());
                let mut up = theta.clone();
                let mut dn = theta.clone();
                up[i] += h;
                dn[i] -= h;
                let fd = (regularizer_value(&up, eta, r) - regularizer_value(&dn, eta, r)) / (2.0 * h);
                let scale = grad.iter().map(|g| g.abs()).fold(1e-3, f64::max);
                prop_assert!((fd - grad[i]).abs() <= 1e-8 * scale.max(fd.abs()) + 1e-9,
                    "i={} fd={} an={}", i, fd, grad[i]);
            }
        }
    }
}
