use super::taming::{tame_f_scale, tame_g_component};
use super::{GradPair, OptimizerConfig};
use crate::SeededRng;

fn add_noise(theta: &mut [f64], cfg: &OptimizerConfig, rng: &mut SeededRng) {
    let scale = cfg.noise_scale();
    for t in theta.iter_mut() {
        *t += scale * rng.gauss();
    }
}

/// In-place e-THεO POULA update.
pub fn etheo_poula_update(
    theta: &mut [f64],
    grad: &GradPair,
    cfg: &OptimizerConfig,
    rng: &mut SeededRng,
) {
    debug_assert_eq!(theta.len(), grad.dim());
    let f_scale = tame_f_scale(theta, cfg.lambda, cfg.r);
    for ((t, g), f) in theta.iter_mut().zip(&grad.g).zip(&grad.f) {
        let drift = tame_g_component(*g, cfg.lambda, cfg.epsilon) + f * f_scale;
        *t -= cfg.lambda * drift;
    }
    add_noise(theta, cfg, rng);
}

/// In-place SGLD update.
pub fn sgld_update(theta: &mut [f64], grad: &GradPair, cfg: &OptimizerConfig, rng: &mut SeededRng) {
    debug_assert_eq!(theta.len(), grad.dim());
    for ((t, g), f) in theta.iter_mut().zip(&grad.g).zip(&grad.f) {
        *t -= cfg.lambda * (g + f);
    }
    add_noise(theta, cfg, rng);
}

/// In-place TUSLA update: the whole gradient is divided by `1 + √λ|θ|^{2r}`.
pub fn tusla_update(theta: &mut [f64], grad: &GradPair, cfg: &OptimizerConfig, rng: &mut SeededRng) {
    debug_assert_eq!(theta.len(), grad.dim());
    let s = tame_f_scale(theta, cfg.lambda, cfg.r);
    for ((t, g), f) in theta.iter_mut().zip(&grad.g).zip(&grad.f) {
        *t -= cfg.lambda * (g + f) * s;
    }
    add_noise(theta, cfg, rng);
}

pub fn etheo_poula_step(
    theta: &[f64],
    grad: &GradPair,
    cfg: &OptimizerConfig,
    rng: &mut SeededRng,
) -> Vec<f64> {
    let mut out = theta.to_vec();
    etheo_poula_update(&mut out, grad, cfg, rng);
    out
}

pub fn sgld_step(theta: &[f64], grad: &GradPair, cfg: &OptimizerConfig, rng: &mut SeededRng) -> Vec<f64> {
    let mut out = theta.to_vec();
    sgld_update(&mut out, grad, cfg, rng);
    out
}

pub fn tusla_step(theta: &[f64], grad: &GradPair, cfg: &OptimizerConfig, rng: &mut SeededRng) -> Vec<f64> {
    let mut out = theta.to_vec();
    tusla_update(&mut out, grad, cfg, rng);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cold(lambda: f64) -> OptimizerConfig {
        OptimizerConfig::default().with_lambda(lambda).with_beta(1e24)
    }

    fn pair(g: &[f64], f: &[f64]) -> GradPair {
        GradPair {
            g: g.to_vec(),
            f: f.to_vec(),
        }
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut rng = SeededRng::new(1);
        let theta = [0.3, -1.2];
        let cfg = cold(0.1);
        for step in [etheo_poula_step, sgld_step, tusla_step] {
            let out = step(&theta, &GradPair::zeros(2), &cfg, &mut rng);
            for (a, b) in out.iter().zip(&theta) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn etheo_hand_value() {
        let mut rng = SeededRng::new(2);
        let cfg = cold(0.01).with_epsilon(0.1);
        let out = etheo_poula_step(&[0.0], &pair(&[1.0], &[0.0]), &cfg, &mut rng);
        assert!((out[0] + 0.009_917_355_371_900_826).abs() < 1e-12, "{}", out[0]);
    }

    #[test]
    fn noise_standard_deviation() {
        let cfg = OptimizerConfig::default().with_lambda(0.1).with_beta(1e12);
        let mut rng = SeededRng::new(3);
        let n = 200_000;
        let zero = GradPair::zeros(1);
        let mut sq = 0.0;
        for _ in 0..n {
            let out = sgld_step(&[0.0], &zero, &cfg, &mut rng);
            sq += out[0] * out[0];
        }
        let sd = (sq / n as f64).sqrt();
        assert!((sd / 4.472_135_955e-7 - 1.0).abs() < 0.01, "{sd}");
    }

    #[test]
    fn sgld_plain_step() {
        let mut rng = SeededRng::new(4);
        let out = sgld_step(&[0.0], &pair(&[1.0], &[0.0]), &cold(0.5), &mut rng);
        assert!((out[0] + 0.5).abs() < 1e-10);
    }

    #[test]
    fn tusla_matches_sgld_at_origin_with_positive_r() {
        let cfg = OptimizerConfig::default().with_lambda(0.05).with_beta(10.0).with_r(1.0);
        let grad = pair(&[0.7, -0.2], &[0.1, 0.4]);
        let a = tusla_step(&[0.0, 0.0], &grad, &cfg, &mut SeededRng::new(9));
        let b = sgld_step(&[0.0, 0.0], &grad, &cfg, &mut SeededRng::new(9));
        assert_eq!(a, b);
    }

    #[test]
    fn tusla_hand_value() {
        let cfg = cold(0.25).with_r(1.0);
        let out = tusla_step(&[2.0, 0.0], &pair(&[3.0, 0.0], &[0.0, 0.0]), &cfg, &mut SeededRng::new(5));
        assert!((out[0] - 1.75).abs() < 1e-10);
        assert!(out[1].abs() < 1e-10);
    }

    #[test]
    fn etheo_approaches_sgld_as_step_shrinks() {
        let grad = pair(&[0.8, -1.5, 2.5], &[0.0; 3]);
        let theta = [0.1, 0.2, -0.3];
        let rel = |lambda: f64| {
            let cfg = cold(lambda).with_epsilon(1e-2);
            let a = etheo_poula_step(&theta, &grad, &cfg, &mut SeededRng::new(0));
            let b = sgld_step(&theta, &grad, &cfg, &mut SeededRng::new(0));
            let num: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            let den: f64 = b.iter().zip(&theta).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            num / den
        };
        let (coarse, fine) = (rel(1e-2), rel(1e-4));
        // O(√λ): a hundredfold smaller step gives roughly a tenfold smaller gap
        let ratio = coarse / fine;
        assert!(ratio > 5.0 && ratio < 20.0, "{coarse} {fine}");
    }

    #[test]
    fn same_rng_state_same_output() {
        let cfg = OptimizerConfig::default().with_lambda(0.1).with_beta(1.0);
        let grad = pair(&[1.0, 2.0], &[0.5, 0.0]);
        let a = etheo_poula_step(&[1.0, 1.0], &grad, &cfg, &mut SeededRng::new(77));
        let b = etheo_poula_step(&[1.0, 1.0], &grad, &cfg, &mut SeededRng::new(77));
        assert_eq!(a, b);
    }
}
