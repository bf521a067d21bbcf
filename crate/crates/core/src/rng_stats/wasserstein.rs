use super::GibbsTable;

/// Default number of quantile levels used by [`empirical_w1_1d`].
pub const DEFAULT_W1_GRID: usize = 16_384;

/// W₁ between the empirical law of `samples` and a tabulated law, computed
/// as ∫₀¹ |F_emp⁻¹(u) − F_π⁻¹(u)| du on midpoint levels.
pub fn empirical_w1_1d(samples: &[f64], table: &GibbsTable) -> f64 {
    empirical_w1_1d_with_grid(samples, table, DEFAULT_W1_GRID)
}

pub fn empirical_w1_1d_with_grid(samples: &[f64], table: &GibbsTable, n_levels: usize) -> f64 {
    assert!(!samples.is_empty(), "W1 needs at least one sample");
    assert!(n_levels > 0);
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut acc = 0.0;
    for k in 0..n_levels {
        let level = (k as f64 + 0.5) / n_levels as f64;
        let idx = ((level * n as f64) as usize).min(n - 1);
        acc += (sorted[idx] - table.quantile(level)).abs();
    }
    acc / n_levels as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_stats::build_gibbs_table;

    fn std_normal() -> GibbsTable {
        build_gibbs_table(|x| 0.5 * x * x, 1.0, -10.0, 10.0, 100_000).unwrap()
    }

    #[test]
    fn self_distance_is_grid_small() {
        let t = std_normal();
        let n = 20_000;
        let samples: Vec<f64> = (0..n)
            .map(|i| t.quantile((i as f64 + 0.5) / n as f64))
            .collect();
        let w = empirical_w1_1d(&samples, &t);
        assert!(w <= 2.0 * t.spacing(), "w1 {w}");
    }

    #[test]
    fn point_mass_against_narrow_gaussian() {
        let sigma: f64 = 0.01;
        let c = 0.3;
        let t = build_gibbs_table(
            |x| 0.5 * ((x - c) / sigma).powi(2),
            1.0,
            c - 20.0 * sigma,
            c + 20.0 * sigma,
            200_000,
        )
        .unwrap();
        let w = empirical_w1_1d(&[c; 100], &t);
        let expected = sigma * (2.0 / std::f64::consts::PI).sqrt();
        assert!((w - expected).abs() < 1e-3 * sigma + 2.0 * t.spacing(), "{w} vs {expected}");
    }

    #[test]
    fn translation_moves_w1_by_at_most_shift() {
        let t = std_normal();
        let mut rng = crate::SeededRng::new(5);
        let a: Vec<f64> = (0..5000).map(|_| rng.gauss()).collect();
        let delta = 0.2;
        let b: Vec<f64> = a.iter().map(|x| x + delta).collect();
        let (wa, wb) = (empirical_w1_1d(&a, &t), empirical_w1_1d(&b, &t));
        assert!((wa - wb).abs() <= delta + 1e-12);
        assert!(wa >= 0.0 && wb >= 0.0);
    }
}
