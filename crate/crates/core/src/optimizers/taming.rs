//! Componentwise taming/boosting of the discontinuous gradient part and
//! scalar taming of the regularizer part.

/// Tamed and boosted component of the discontinuous gradient part:
///
/// `g / (1 + √λ|g|) · (1 + √λ / (ε + |g|))`
///
/// The magnitude never exceeds `2/√λ` and the sign follows `g`.
#[inline]
pub fn tame_g_component(g: f64, lambda: f64, epsilon: f64) -> f64 {
    let sl = lambda.sqrt();
    let a = g.abs();
    if a.is_infinite() {
        return g.signum() / sl;
    }
    g / (1.0 + sl * a) * (1.0 + sl / (epsilon + a))
}

/// `1 / (1 + √λ|θ|^{2r})` with the Euclidean norm of the whole vector.
/// For `r = 0` the factor is `1/(1 + √λ)` even at θ = 0.
#[inline]
pub fn tame_f_scale(theta: &[f64], lambda: f64, r: f64) -> f64 {
    let norm_sq: f64 = theta.iter().map(|t| t * t).sum();
    let grow = if r == 0.0 { 1.0 } else { norm_sq.powf(r) };
    1.0 / (1.0 + lambda.sqrt() * grow)
}

/// Regularizer part scaled by [`tame_f_scale`].
pub fn tame_f(f: &[f64], theta: &[f64], lambda: f64, r: f64) -> Vec<f64> {
    debug_assert_eq!(f.len(), theta.len());
    let s = tame_f_scale(theta, lambda, r);
    f.iter().map(|v| v * s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_gradient_maps_to_zero() {
        assert_eq!(tame_g_component(0.0, 0.3, 0.1), 0.0);
    }

    #[test]
    fn hand_value() {
        // (1/1.1) * (1 + 0.1/1.1)
        let expected = 0.991_735_537_190_082_6;
        assert!((tame_g_component(1.0, 0.01, 0.1) - expected).abs() < 1e-15);
    }

    #[test]
    fn large_gradient_saturates() {
        let v = tame_g_component(1e9, 0.01, 0.1);
        assert!(v > 0.0 && v <= 20.0);
        assert!((v - 10.0).abs() < 1e-6, "{v}");
        assert_eq!(tame_g_component(f64::INFINITY, 0.01, 0.1), 10.0);
    }

    #[test]
    fn tame_f_cases() {
        let f = [1.0, -2.0];
        assert_eq!(tame_f(&f, &[0.0, 0.0], 0.3, 1.0), f.to_vec());
        let out = tame_f(&[3.0, 0.0], &[2.0, 0.0], 0.25, 1.0);
        assert!((out[0] - 1.0).abs() < 1e-15);
        // r = 0 keeps the constant factor
        let out = tame_f(&[1.0], &[0.0], 0.25, 0.0);
        assert!((out[0] - 1.0 / 1.5).abs() < 1e-15);
    }

    #[test]
    fn monotone_on_positive_half_line() {
        for &(lambda, eps) in &[(1.0, 0.5), (0.01, 1e-8), (1e-4, 0.1), (0.5, 1e-12)] {
            let mut prev = 0.0;
            for k in 1..=200_000 {
                let g = 1e-6 * (1.000_2f64).powi(k) - 1e-6;
                let v = tame_g_component(g, lambda, eps);
                // rounding slack of a few ulps
                assert!(v >= prev * (1.0 - 4.0 * f64::EPSILON), "λ={lambda} ε={eps} g={g}: {v} < {prev}");
                prev = v;
            }
        }
    }

    proptest! {
        #[test]
        fn bounded_and_odd(g in -1e12f64..1e12, lambda in 1e-8f64..=1.0, eps in 1e-12f64..0.999) {
            let v = tame_g_component(g, lambda, eps);
            prop_assert!(v.abs() <= 2.0 / lambda.sqrt());
            prop_assert_eq!(tame_g_component(-g, lambda, eps), -v);
            prop_assert!(v == 0.0 || v.signum() == g.signum());
        }

        #[test]
        fn regularizer_bound(
            theta in proptest::collection::vec(-50.0f64..50.0, 1..6),
            lambda in 1e-6f64..=1.0,
            r in 0.0f64..3.0,
            eta in 1e-6f64..10.0,
        ) {
            let norm_sq: f64 = theta.iter().map(|t| t * t).sum();
            let f: Vec<f64> = theta.iter().map(|t| eta * t * norm_sq.powf(r)).collect();
            let out = tame_f(&f, &theta, lambda, r);
            for (o, t) in out.iter().zip(&theta) {
                prop_assert!(o.abs() <= eta * t.abs() / lambda.sqrt() * (1.0 + 1e-12));
            }
        }
    }
}
