use serde::{Deserialize, Serialize};

use super::{regularizer_grad, ScalarDist, StochasticObjective};
use crate::error::{Error, Result};
use crate::optimizers::GradPair;
use crate::SeededRng;

/// Mean squared quantization error of scalar data onto `n_codes` codes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorQuantizationSpec {
    pub n_codes: usize,
    pub eta: f64,
    pub r: f64,
    pub data_dist: ScalarDist,
}

/// Index of the code closest to `x`; ties go to the lowest index.
pub fn nearest_code(codes: &[f64], x: f64) -> usize {
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for (i, c) in codes.iter().enumerate() {
        let d = (x - c).abs();
        if d < best_dist {
            best = i;
            best_dist = d;
        }
    }
    best
}

impl VectorQuantizationSpec {
    pub fn new(n_codes: usize, eta: f64, r: f64, data_dist: ScalarDist) -> Result<Self> {
        if n_codes == 0 {
            return Err(Error::invalid("n_codes", "must be at least 1"));
        }
        if !(eta >= 0.0) || !(r >= 0.0) {
            return Err(Error::invalid("eta/r", "must be nonnegative"));
        }
        data_dist.validate()?;
        Ok(Self {
            n_codes,
            eta,
            r,
            data_dist,
        })
    }
}

/// Only the nearest code receives `−2(x − θ_i)`; `F = ηθ|θ|^{2r}`.
pub fn vq_gradpair(theta: &[f64], x: f64, spec: &VectorQuantizationSpec) -> GradPair {
    GradPair {
        g: spec.g(theta, &x),
        f: regularizer_grad(theta, spec.eta, spec.r),
    }
}

impl StochasticObjective for VectorQuantizationSpec {
    type Sample = f64;

    fn dim(&self) -> usize {
        self.n_codes
    }

    fn sample(&self, rng: &mut SeededRng) -> f64 {
        self.data_dist.sample(rng)
    }

    fn data_loss(&self, theta: &[f64], x: &f64) -> f64 {
        let i = nearest_code(theta, *x);
        (x - theta[i]).powi(2)
    }

    fn g(&self, theta: &[f64], x: &f64) -> Vec<f64> {
        let mut g = vec![0.0; theta.len()];
        let i = nearest_code(theta, *x);
        g[i] = -2.0 * (x - theta[i]);
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

    fn two_codes() -> VectorQuantizationSpec {
        VectorQuantizationSpec::new(2, 0.0, 0.0, ScalarDist::UNIT_UNIFORM).unwrap()
    }

    #[test]
    fn hand_values() {
        let g = vq_gradpair(&[0.2, 0.8], 0.3, &two_codes()).g;
        assert!((g[0] + 0.2).abs() < 1e-15 && g[1] == 0.0);
        assert_eq!(vq_gradpair(&[0.2, 0.8], 0.8, &two_codes()).g, vec![0.0, 0.0]);
        // equidistant: lowest index wins
        let g = vq_gradpair(&[0.2, 0.8], 0.5, &two_codes()).g;
        assert!((g[0] + 0.6).abs() < 1e-15 && g[1] == 0.0);
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let spec = VectorQuantizationSpec::new(3, 0.05, 0.5, ScalarDist::STANDARD_NORMAL).unwrap();
        let pool = spec.sample_n(1_000_000, &mut SeededRng::new(8));
        let theta = [-1.0, 0.2, 1.1];
        let (gp, se) = mean_gradpair_pool(&theta, &spec, &pool);
        for i in 0..3 {
            let h = 1e-3;
            let mut up = theta;
            let mut dn = theta;
            up[i] += h;
            dn[i] -= h;
            let fd = (mc_objective_pool(&up, &spec, &pool).mean - mc_objective_pool(&dn, &spec, &pool).mean)
                / (2.0 * h);
            let total = gp.g[i] + gp.f[i];
            assert!((fd - total).abs() <= 3.0 * se[i] + 1e-4, "{i}: fd={fd} g={total}");
        }
    }

    proptest! {
        #[test]
        fn exactly_one_active_component(
            codes in proptest::collection::btree_set(-1000i32..1000, 1..6),
            x in -15.0f64..15.0,
        ) {
            let theta: Vec<f64> = codes.into_iter().map(|c| c as f64 / 100.0).collect();
            prop_assume!(theta.iter().all(|t| (t - x).abs() > 0.0));
            let spec = VectorQuantizationSpec::new(theta.len(), 0.0, 0.0, ScalarDist::UNIT_UNIFORM).unwrap();
            let g = vq_gradpair(&theta, x, &spec).g;
            prop_assert_eq!(g.iter().filter(|v| **v != 0.0).count(), 1);
        }
    }
}
