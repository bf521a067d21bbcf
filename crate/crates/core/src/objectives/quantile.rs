use serde::{Deserialize, Serialize};

use super::{regularizer_grad, ScalarDist, StochasticObjective};
use crate::error::{Error, Result};
use crate::optimizers::GradPair;
use crate::SeededRng;

/// Regularized pinball loss whose minimizer is the `q`-quantile of the data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantileSpec {
    pub q: f64,
    pub eta: f64,
    pub r: f64,
    pub data_dist: ScalarDist,
}

/// Pinball loss `q z` for `z ≥ 0`, `(q − 1) z` otherwise.
#[inline]
pub fn pinball(z: f64, q: f64) -> f64 {
    if z >= 0.0 {
        q * z
    } else {
        (q - 1.0) * z
    }
}

impl QuantileSpec {
    pub fn new(q: f64, eta: f64, r: f64, data_dist: ScalarDist) -> Result<Self> {
        let spec = Self { q, eta, r, data_dist };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::invalid("q", "must lie in (0, 1)"));
        }
        if !(self.eta >= 0.0) || !(self.r >= 0.0) {
            return Err(Error::invalid("eta/r", "must be nonnegative"));
        }
        self.data_dist.validate()
    }

    #[inline]
    pub fn g_scalar(&self, theta: f64, x: f64) -> f64 {
        -self.q + if x < theta { 1.0 } else { 0.0 }
    }

    pub fn gradpair_at(&self, theta: f64, x: f64) -> GradPair {
        GradPair {
            g: vec![self.g_scalar(theta, x)],
            f: regularizer_grad(&[theta], self.eta, self.r),
        }
    }

    /// Closed-form `u(θ)` including the regularizer; available for uniform
    /// data only.
    pub fn exact_objective(&self, theta: f64) -> Option<f64> {
        let ScalarDist::Uniform { lo, hi } = self.data_dist else {
            return None;
        };
        let mean = 0.5 * (lo + hi);
        let upper = if theta <= lo {
            mean - theta
        } else if theta >= hi {
            0.0
        } else {
            (hi - theta).powi(2) / (2.0 * (hi - lo))
        };
        Some(upper - (1.0 - self.q) * (mean - theta) + self.regularizer(&[theta]))
    }
}

/// `G = −q + 1{x < θ}`, `F = ηθ|θ|^{2r}`.
pub fn quantile_gradpair(theta: f64, x: f64, spec: &QuantileSpec) -> GradPair {
    spec.gradpair_at(theta, x)
}

impl StochasticObjective for QuantileSpec {
    type Sample = f64;

    fn dim(&self) -> usize {
        1
    }

    fn sample(&self, rng: &mut SeededRng) -> f64 {
        self.data_dist.sample(rng)
    }

    fn data_loss(&self, theta: &[f64], x: &f64) -> f64 {
        pinball(x - theta[0], self.q)
    }

    fn g(&self, theta: &[f64], x: &f64) -> Vec<f64> {
        vec![self.g_scalar(theta[0], *x)]
    }

    fn eta(&self) -> f64 {
        self.eta
    }

    fn r(&self) -> f64 {
        self.r
    }
}
