use serde::{Deserialize, Serialize};

use super::{regularizer_grad, ScalarDist, StochasticObjective};
use crate::error::{Error, Result};
use crate::optimizers::GradPair;
use crate::SeededRng;

/// Joint VaR/CVaR minimization over softmax portfolio weights.
///
/// Parameters are `θ = (var_level, w_1, …, w_N)`; asset losses are drawn
/// independently from `loss_dist`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvarSpec {
    pub q: f64,
    pub eta: f64,
    pub r: f64,
    pub loss_dist: Vec<ScalarDist>,
}

/// Max-shifted softmax.
pub fn softmax(w: &[f64]) -> Vec<f64> {
    let m = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = w.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

impl CvarSpec {
    pub fn new(q: f64, eta: f64, r: f64, loss_dist: Vec<ScalarDist>) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::invalid("q", "must lie in (0, 1)"));
        }
        if loss_dist.is_empty() {
            return Err(Error::invalid("n_assets", "must be at least 1"));
        }
        if !(eta >= 0.0) || !(r >= 0.0) {
            return Err(Error::invalid("eta/r", "must be nonnegative"));
        }
        for d in &loss_dist {
            d.validate()?;
        }
        Ok(Self { q, eta, r, loss_dist })
    }

    pub fn n_assets(&self) -> usize {
        self.loss_dist.len()
    }

    fn portfolio_loss(weights: &[f64], x: &[f64]) -> f64 {
        weights.iter().zip(x).map(|(g, x)| g * x).sum()
    }
}

/// `G_var = 1 − 1{L ≥ var}/(1−q)` and `G_w = ∂_w L · 1{L ≥ var}/(1−q)` with
/// `L = Σ softmax(w)_i x_i`.
pub fn cvar_gradpair(theta: &[f64], x: &[f64], spec: &CvarSpec) -> GradPair {
    GradPair {
        g: spec.g(theta, &x.to_vec()),
        f: regularizer_grad(theta, spec.eta, spec.r),
    }
}

impl StochasticObjective for CvarSpec {
    type Sample = Vec<f64>;

    fn dim(&self) -> usize {
        self.n_assets() + 1
    }

    fn sample(&self, rng: &mut SeededRng) -> Vec<f64> {
        self.loss_dist.iter().map(|d| d.sample(rng)).collect()
    }

    fn data_loss(&self, theta: &[f64], x: &Vec<f64>) -> f64 {
        let weights = softmax(&theta[1..]);
        let loss = Self::portfolio_loss(&weights, x);
        (loss - theta[0]).max(0.0) / (1.0 - self.q) + theta[0]
    }

    fn g(&self, theta: &[f64], x: &Vec<f64>) -> Vec<f64> {
        let weights = softmax(&theta[1..]);
        let loss = Self::portfolio_loss(&weights, x);
        let mut g = vec![0.0; theta.len()];
        if loss >= theta[0] {
            let tail = 1.0 / (1.0 - self.q);
            g[0] = 1.0 - tail;
            // Σ_i g_i(δ_ij − g_j) x_i = g_j (x_j − L)
            for j in 0..weights.len() {
                g[j + 1] = tail * weights[j] * (x[j] - loss);
            }
        } else {
            g[0] = 1.0;
        }
        g
    }

    fn eta(&self) -> f64 {
        self.eta
    }

    fn r(&self) -> f64 {
        self.r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{mc_objective_pool, mean_gradpair_pool};
    use proptest::prelude::*;

    fn spec(n: usize, q: f64) -> CvarSpec {
        CvarSpec::new(q, 0.0, 0.0, vec![ScalarDist::STANDARD_NORMAL; n]).unwrap()
    }

    /// Weight gradient through the full softmax Jacobian.
    fn jacobian_route(theta: &[f64], x: &[f64], q: f64) -> Vec<f64> {
        let g = softmax(&theta[1..]);
        let loss: f64 = g.iter().zip(x).map(|(a, b)| a * b).sum();
        let active = if loss >= theta[0] { 1.0 } else { 0.0 };
        (0..g.len())
            .map(|j| {
                let d: f64 = (0..g.len())
                    .map(|i| g[i] * (if i == j { 1.0 } else { 0.0 } - g[j]) * x[i])
                    .sum();
                d * active / (1.0 - q)
            })
            .collect()
    }

    #[test]
    fn hand_values() {
        let g = cvar_gradpair(&[0.0, 0.0, 0.0], &[1.0, 0.0], &spec(2, 0.5)).g;
        assert!((g[0] + 1.0).abs() < 1e-15);
        assert!((g[1] - 0.5).abs() < 1e-15);
        assert!((g[2] + 0.5).abs() < 1e-15);
        // above every loss: indicator off
        assert_eq!(cvar_gradpair(&[5.0, 0.0, 0.0], &[1.0, 0.0], &spec(2, 0.5)).g[0], 1.0);
        // single asset: weight gradient vanishes
        let g = cvar_gradpair(&[-3.0, 0.7], &[2.0], &spec(1, 0.9)).g;
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn softmax_is_stable_for_large_logits() {
        let w = softmax(&[700.0, -700.0, 699.0]);
        assert!(w.iter().all(|v| v.is_finite()));
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let s = CvarSpec::new(
            0.8,
            0.01,
            0.5,
            vec![
                ScalarDist::Gaussian { mean: 0.1, sd: 1.0 },
                ScalarDist::Gaussian { mean: -0.2, sd: 0.5 },
                ScalarDist::Uniform { lo: -1.0, hi: 2.0 },
            ],
        )
        .unwrap();
        let pool = s.sample_n(1_000_000, &mut SeededRng::new(9));
        let theta = [0.6, 0.3, -0.2, 0.1];
        let (gp, se) = mean_gradpair_pool(&theta, &s, &pool);
        for i in 0..theta.len() {
            let h = 1e-3;
            let mut up = theta;
            let mut dn = theta;
            up[i] += h;
            dn[i] -= h;
            let fd = (mc_objective_pool(&up, &s, &pool).mean - mc_objective_pool(&dn, &s, &pool).mean)
                / (2.0 * h);
            let total = gp.g[i] + gp.f[i];
            assert!((fd - total).abs() <= 3.0 * se[i] + 1e-4, "{i}: fd={fd} g={total}");
        }
    }

    /// Strict interior holds while no weight rounds to 0 or 1.
    fn n_strict(spread: f64, n: usize) -> bool {
        n > 1 && spread < 30.0
    }

    proptest! {
        #[test]
        fn weights_form_a_simplex(w in proptest::collection::vec(-700.0f64..700.0, 1..8)) {
            let g = softmax(&w);
            prop_assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(g.iter().all(|v| *v >= 0.0 && *v <= 1.0));
            let spread = w.iter().cloned().fold(f64::MIN, f64::max) - w.iter().cloned().fold(f64::MAX, f64::min);
            if n_strict(spread, w.len()) {
                prop_assert!(g.iter().all(|v| *v > 0.0 && *v < 1.0));
            }
        }

        #[test]
        fn compact_weight_gradient_equals_jacobian_route(
            w in proptest::collection::vec(-5.0f64..5.0, 1..6),
            var_level in -2.0f64..2.0,
            seed in 0u64..1000,
        ) {
            let n = w.len();
            let s = spec(n, 0.9);
            let x = s.sample(&mut SeededRng::new(seed));
            let mut theta = vec![var_level];
            theta.extend(&w);
            let g = cvar_gradpair(&theta, &x, &s).g;
            let reference = jacobian_route(&theta, &x, 0.9);
            for j in 0..n {
                prop_assert!((g[j + 1] - reference[j]).abs() < 1e-12 * (1.0 + reference[j].abs()));
            }
        }
    }
}
