use serde::{Deserialize, Serialize};

use super::{regularizer_grad, ScalarDist, StochasticObjective};
use crate::error::{Error, Result};
use crate::optimizers::GradPair;
use crate::SeededRng;

/// Squared-error fit of the one-neuron model `k1 · relu(c0 z + b0)` with a
/// fixed input weight `c0`. Parameters are `θ = (k1, b0)`.
///
/// Data come from a planted teacher: `z ~ z_dist`,
/// `y = k1_true · relu(c0 z + b0_true) + noise_sd · ξ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReluRegressionSpec {
    pub c0: f64,
    pub eta: f64,
    pub r: f64,
    pub k1_true: f64,
    pub b0_true: f64,
    pub z_dist: ScalarDist,
    pub noise_sd: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReluSample {
    pub y: f64,
    pub z: f64,
}

impl ReluRegressionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.c0 == 0.0 || !self.c0.is_finite() {
            return Err(Error::invalid("c0", "must be nonzero"));
        }
        if !(self.eta >= 0.0) || !(self.r >= 0.0) {
            return Err(Error::invalid("eta/r", "must be nonnegative"));
        }
        if !(self.noise_sd >= 0.0) {
            return Err(Error::invalid("noise_sd", "must be nonnegative"));
        }
        self.z_dist.validate()
    }

    #[inline]
    pub fn predict(&self, theta: &[f64], z: f64) -> f64 {
        theta[0] * (self.c0 * z + theta[1]).max(0.0)
    }
}

/// `G_k1 = −2(y − N) relu(c0 z + b0)`, `G_b0 = −2(y − N) k1 1{c0 z + b0 ≥ 0}`.
pub fn relu_regression_gradpair(theta: &[f64], x: &ReluSample, spec: &ReluRegressionSpec) -> GradPair {
    GradPair {
        g: spec.g(theta, x),
        f: regularizer_grad(theta, spec.eta, spec.r),
    }
}

impl StochasticObjective for ReluRegressionSpec {
    type Sample = ReluSample;

    fn dim(&self) -> usize {
        2
    }

    fn sample(&self, rng: &mut SeededRng) -> ReluSample {
        let z = self.z_dist.sample(rng);
        let clean = self.k1_true * (self.c0 * z + self.b0_true).max(0.0);
        let y = clean + self.noise_sd * rng.gauss();
        ReluSample { y, z }
    }

    fn data_loss(&self, theta: &[f64], x: &ReluSample) -> f64 {
        (x.y - self.predict(theta, x.z)).powi(2)
    }

    fn g(&self, theta: &[f64], x: &ReluSample) -> Vec<f64> {
        let pre = self.c0 * x.z + theta[1];
        if pre < 0.0 {
            return vec![0.0, 0.0];
        }
        let resid = x.y - theta[0] * pre;
        vec![-2.0 * resid * pre, -2.0 * resid * theta[0]]
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

    fn spec() -> ReluRegressionSpec {
        ReluRegressionSpec {
            c0: 1.0,
            eta: 1e-3,
            r: 0.5,
            k1_true: 2.0,
            b0_true: 0.5,
            z_dist: ScalarDist::Uniform { lo: -1.0, hi: 1.0 },
            noise_sd: 0.1,
        }
    }

    #[test]
    fn hand_values() {
        let s = spec();
        let g = relu_regression_gradpair(&[2.0, 0.5], &ReluSample { y: 4.0, z: 1.0 }, &s).g;
        assert!((g[0] + 3.0).abs() < 1e-15 && (g[1] + 4.0).abs() < 1e-15);
        // dead unit
        assert_eq!(s.g(&[2.0, 0.5], &ReluSample { y: 1.0, z: -2.0 }), vec![0.0, 0.0]);
        // zero residual
        assert_eq!(s.g(&[2.0, 0.5], &ReluSample { y: 3.0, z: 1.0 }), vec![0.0, 0.0]);
    }

    #[test]
    fn negative_input_weight_uses_sign_safe_indicator() {
        let s = ReluRegressionSpec { c0: -2.0, ..spec() };
        // c0 z + b0 = -2·(-1) + 0.5 = 2.5 > 0 although z < -b0/c0 fails
        let g = s.g(&[1.0, 0.5], &ReluSample { y: 0.0, z: -1.0 });
        assert!(g[1] != 0.0);
        let g = s.g(&[1.0, 0.5], &ReluSample { y: 0.0, z: 1.0 });
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn rejects_zero_input_weight() {
        assert!(ReluRegressionSpec { c0: 0.0, ..spec() }.validate().is_err());
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let s = spec();
        let pool = s.sample_n(1_000_000, &mut SeededRng::new(10));
        for theta in [[1.0, 0.2], [2.5, 0.8], [-0.5, 0.3]] {
            let (gp, se) = mean_gradpair_pool(&theta, &s, &pool);
            for i in 0..2 {
                let h = 1e-4;
                let mut up = theta;
                let mut dn = theta;
                up[i] += h;
                dn[i] -= h;
                let fd = (mc_objective_pool(&up, &s, &pool).mean - mc_objective_pool(&dn, &s, &pool).mean)
                    / (2.0 * h);
                let total = gp.g[i] + gp.f[i];
                assert!((fd - total).abs() <= 3.0 * se[i] + 1e-4, "{theta:?} {i}: fd={fd} g={total}");
            }
        }
    }
}
