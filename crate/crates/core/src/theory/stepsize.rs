use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Constants entering the step-size restriction for the 2p-th moment
/// bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSizeInputs {
    pub p: u32,
    /// Dissipativity constant of the regularizer (`a/2`).
    pub a_f: f64,
    /// Growth constant of the regularizer.
    pub k_f: f64,
    /// Growth exponent of the data.
    pub rho: f64,
    /// `E[(1 + |X₀|)^{2pρ}]`.
    pub moment_2p_rho: f64,
}

impl StepSizeInputs {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::invalid("p", "must be a positive integer"));
        }
        for (name, v) in [("a_f", self.a_f), ("k_f", self.k_f), ("moment_2p_rho", self.moment_2p_rho)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("must be positive and finite, got {v}")));
            }
        }
        if !(self.rho >= 1.0 && self.rho.is_finite()) {
            return Err(Error::invalid("rho", format!("must be at least 1, got {}", self.rho)));
        }
        Ok(())
    }
}

/// `min{1, 1/a_F, 1/a_F², min{(a_F/K_F)², (a_F/K_F)^{2/(2p−1)}} /
/// (16 K_F² p² (2p−1)² M²)}` with `M = E[(1+|X₀|)^{2pρ}]`.
pub fn lambda_max(inputs: &StepSizeInputs) -> Result<f64> {
    inputs.validate()?;
    let StepSizeInputs { p, a_f, k_f, moment_2p_rho, .. } = *inputs;
    let p = p as f64;
    let odd = 2.0 * p - 1.0;
    let ratio = a_f / k_f;
    let numerator = (ratio * ratio).min(ratio.powf(2.0 / odd));
    let last = numerator / (16.0 * k_f * k_f * p * p * odd * odd * moment_2p_rho * moment_2p_rho);
    Ok(1.0_f64.min(1.0 / a_f).min(1.0 / (a_f * a_f)).min(last))
}

/// The bound at `p = 4r + 2`. `moment(s)` must return `E[(1 + |X₀|)^s]`.
pub fn lambda_max_overall(r: f64, a_f: f64, k_f: f64, rho: f64, moment: impl Fn(f64) -> f64) -> Result<f64> {
    let p = 4.0 * r + 2.0;
    if !(r >= 0.0) || p.fract() != 0.0 {
        return Err(Error::invalid("r", format!("4r + 2 must be a positive integer, got r = {r}")));
    }
    let p = p as u32;
    lambda_max(&StepSizeInputs {
        p,
        a_f,
        k_f,
        rho,
        moment_2p_rho: moment(2.0 * p as f64 * rho),
    })
}

/// `E[(1 + X)^s]` for `X = exp(μ + σZ)` by Simpson's rule in `Z`.
pub fn lognormal_shifted_moment(mu: f64, sigma: f64, s: f64) -> f64 {
    let n = 8000;
    let (lo, hi) = (-12.0, 12.0);
    let h = (hi - lo) / n as f64;
    let f = |z: f64| (1.0 + (mu + sigma * z).exp()).powf(s) * (-0.5 * z * z).exp();
    let mut acc = f(lo) + f(hi);
    for i in 1..n {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(lo + h * i as f64);
    }
    acc * h / 3.0 / (2.0 * std::f64::consts::PI).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn inputs(p: u32, a_f: f64, k_f: f64, m: f64) -> StepSizeInputs {
        StepSizeInputs { p, a_f, k_f, rho: 1.0, moment_2p_rho: m }
    }

    #[test]
    fn hand_values() {
        // a_F = K_F, unit moment, p = 1: the last term is 1/(16 a_F²)
        for a in [1.0, 2.0, 7.5] {
            let got = lambda_max(&inputs(1, a, a, 1.0)).unwrap();
            assert_eq!(got, 1.0 / (16.0 * a * a));
        }
        // p = 2, a_F = 1, K_F = 2, M = 3: (1/2)^{2/3} vs 1/4 → 1/4 over 16·4·4·9·9
        let got = lambda_max(&inputs(2, 1.0, 2.0, 3.0)).unwrap();
        assert!((got - 0.25 / (16.0 * 4.0 * 4.0 * 9.0 * 9.0)).abs() < 1e-18);
        // small a_F: ratio below one, exponent 2/(2p−1) = 2 at p = 1
        let got = lambda_max(&inputs(1, 0.1, 1.0, 1.0)).unwrap();
        assert!((got - 0.01 / 16.0).abs() < 1e-18);
        // K_F < a_F: (a_F/K_F)^{2/3} < (a_F/K_F)², p = 2
        let got = lambda_max(&inputs(2, 0.5, 0.25, 1.0)).unwrap();
        let expect = 2f64.powf(2.0 / 3.0) / (16.0 * 0.0625 * 4.0 * 9.0);
        assert!((got - expect).abs() < 1e-15 * expect);
    }

    #[test]
    fn dominated_by_last_term_for_large_growth() {
        let mut prev = f64::INFINITY;
        for k in [10.0, 100.0, 1e3, 1e4] {
            let v = lambda_max(&inputs(1, 1.0, k, 1.0)).unwrap();
            assert!(v < 1.0 && v < prev);
            prev = v;
        }
    }

    #[test]
    fn overall_uses_p_from_r() {
        let m = |s: f64| 1.0 + s;
        let v = lambda_max_overall(0.5, 1.0, 2.0, 1.0, m).unwrap();
        let direct = lambda_max(&StepSizeInputs { p: 4, a_f: 1.0, k_f: 2.0, rho: 1.0, moment_2p_rho: 9.0 }).unwrap();
        assert_eq!(v, direct);
        assert!(lambda_max_overall(0.1, 1.0, 2.0, 1.0, m).is_err());
    }

    #[test]
    fn lognormal_moment_matches_closed_form() {
        // (1 + X)² = 1 + 2X + X², E[X^k] = exp(kμ + k²σ²/2)
        let (mu, s): (f64, f64) = (0.1, 0.4);
        let exact = 1.0 + 2.0 * (mu + 0.5 * s * s).exp() + (2.0 * mu + 2.0 * s * s).exp();
        assert!((lognormal_shifted_moment(mu, s, 2.0) - exact).abs() < 1e-10 * exact);
        assert!((lognormal_shifted_moment(mu, s, 0.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nonincreasing_in_p_on_lognormal_initial_law() {
        let (mu, sigma, rho) = (0.0, 0.5, 1.0);
        let mut prev = f64::INFINITY;
        for p in 1..=8u32 {
            let m = lognormal_shifted_moment(mu, sigma, 2.0 * p as f64 * rho);
            let v = lambda_max(&StepSizeInputs { p, a_f: 0.5, k_f: 2.0, rho, moment_2p_rho: m }).unwrap();
            assert!(v <= prev, "p = {p}: {v} > {prev}");
            prev = v;
        }
    }

    #[test]
    fn rejects_invalid_inputs() {
        assert!(lambda_max(&inputs(0, 1.0, 1.0, 1.0)).is_err());
        assert!(lambda_max(&inputs(1, 0.0, 1.0, 1.0)).is_err());
        assert!(lambda_max(&StepSizeInputs { rho: 0.5, ..inputs(1, 1.0, 1.0, 1.0) }).is_err());
    }

    proptest! {
        #[test]
        fn never_exceeds_one(p in 1u32..20, a in 1e-3f64..1e3, k in 1e-3f64..1e3, m in 1.0f64..1e6) {
            let v = lambda_max(&inputs(p, a, k, m)).unwrap();
            prop_assert!(v > 0.0 && v <= 1.0);
        }
    }
}
