use super::{GradPair, OptimizerConfig, OptimizerState};

fn moments(grad: &GradPair, state: &mut OptimizerState, cfg: &OptimizerConfig) {
    state.step_count += 1;
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    for i in 0..grad.dim() {
        let h = grad.g[i] + grad.f[i];
        state.first_moment[i] = b1 * state.first_moment[i] + (1.0 - b1) * h;
        state.second_moment[i] = b2 * state.second_moment[i] + (1.0 - b2) * h * h;
    }
}

/// Bias-corrected ADAM update, `θ -= λ m̂ / (√v̂ + eps)`.
pub fn adam_update(theta: &mut [f64], grad: &GradPair, state: &mut OptimizerState, cfg: &OptimizerConfig) {
    debug_assert_eq!(theta.len(), state.dim());
    moments(grad, state, cfg);
    let t = state.step_count as i32;
    let c1 = 1.0 - cfg.adam_beta1.powi(t);
    let c2 = 1.0 - cfg.adam_beta2.powi(t);
    for (i, th) in theta.iter_mut().enumerate() {
        let m_hat = state.first_moment[i] / c1;
        let v_hat = state.second_moment[i] / c2;
        *th -= cfg.lambda * m_hat / (v_hat.sqrt() + cfg.adam_eps);
    }
}

/// AMSGrad: as ADAM but the denominator uses the running maximum of the
/// second moment.
pub fn amsgrad_update(
    theta: &mut [f64],
    grad: &GradPair,
    state: &mut OptimizerState,
    cfg: &OptimizerConfig,
) {
    debug_assert_eq!(theta.len(), state.dim());
    moments(grad, state, cfg);
    let t = state.step_count as i32;
    let c1 = 1.0 - cfg.adam_beta1.powi(t);
    let c2 = 1.0 - cfg.adam_beta2.powi(t);
    for (i, th) in theta.iter_mut().enumerate() {
        let vmax = state.max_second_moment[i].max(state.second_moment[i]);
        state.max_second_moment[i] = vmax;
        let m_hat = state.first_moment[i] / c1;
        *th -= cfg.lambda * m_hat / ((vmax / c2).sqrt() + cfg.adam_eps);
    }
}

pub fn adam_step(
    theta: &[f64],
    grad: &GradPair,
    state: &OptimizerState,
    cfg: &OptimizerConfig,
) -> (Vec<f64>, OptimizerState) {
    let mut out = theta.to_vec();
    let mut st = state.clone();
    adam_update(&mut out, grad, &mut st, cfg);
    (out, st)
}

pub fn amsgrad_step(
    theta: &[f64],
    grad: &GradPair,
    state: &OptimizerState,
    cfg: &OptimizerConfig,
) -> (Vec<f64>, OptimizerState) {
    let mut out = theta.to_vec();
    let mut st = state.clone();
    amsgrad_update(&mut out, grad, &mut st, cfg);
    (out, st)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizers::{Optimizer, OptimizerKind};
    use crate::SeededRng;

    fn uniform(c: f64, d: usize) -> GradPair {
        GradPair {
            g: vec![c; d],
            f: vec![0.0; d],
        }
    }

    #[test]
    fn first_step_closed_form() {
        let cfg = OptimizerConfig::default().with_lambda(0.1);
        for c in [-3.0f64, 1e-9, 0.5, 40.0] {
            let expected = -0.1 * c.signum() * c.abs() / (c.abs() + cfg.adam_eps);
            for step in [adam_step, amsgrad_step] {
                let (out, st) = step(&[0.0; 3], &uniform(c, 3), &OptimizerState::new(3), &cfg);
                assert_eq!(st.step_count, 1);
                for v in out {
                    assert!((v - expected).abs() < 1e-12 * (1.0 + expected.abs()), "{c}: {v}");
                }
            }
        }
    }

    #[test]
    fn zero_gradient_never_moves() {
        let cfg = OptimizerConfig::default();
        let mut state = OptimizerState::new(2);
        let mut theta = vec![0.4, -2.0];
        for _ in 0..100 {
            adam_update(&mut theta, &GradPair::zeros(2), &mut state, &cfg);
            amsgrad_update(&mut theta, &GradPair::zeros(2), &mut state, &cfg);
        }
        assert_eq!(theta, vec![0.4, -2.0]);
    }

    #[test]
    fn amsgrad_max_is_monotone() {
        let cfg = OptimizerConfig::default();
        let mut state = OptimizerState::new(1);
        let mut theta = vec![0.0];
        let mut prev = 0.0;
        for k in 0..50 {
            let g = 10.0 / (1.0 + k as f64);
            amsgrad_update(&mut theta, &uniform(g, 1), &mut state, &cfg);
            assert!(state.max_second_moment[0] >= prev);
            assert!(state.max_second_moment[0] >= state.second_moment[0]);
            prev = state.max_second_moment[0];
        }
    }

    #[test]
    fn all_rules_solve_a_quadratic() {
        // u(θ) = (θ - 1.5)², gradient 2(θ - 1.5)
        let cfg = OptimizerConfig::default().with_lambda(0.01).with_beta(1e24);
        for kind in OptimizerKind::ALL {
            let mut opt = Optimizer::new(kind, cfg, 1).unwrap();
            let mut rng = SeededRng::new(11);
            let mut theta = vec![-2.0];
            for _ in 0..10_000 {
                let grad = GradPair {
                    g: vec![2.0 * (theta[0] - 1.5)],
                    f: vec![0.0],
                };
                opt.step(&mut theta, &grad, 0, &mut rng);
            }
            assert!((theta[0] - 1.5).abs() < 1e-3, "{kind}: {}", theta[0]);
        }
    }
}
