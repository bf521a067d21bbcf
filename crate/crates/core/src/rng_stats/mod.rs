//! Seeded random streams, Gibbs-density quadrature and the 1-D Wasserstein
//! distance used to compare chain output against a target law.

mod gibbs;
mod rng;
mod wasserstein;

pub use gibbs::{build_gibbs_table, build_gibbs_table_clamped, GibbsTable};
pub use rng::SeededRng;
pub use wasserstein::{empirical_w1_1d, empirical_w1_1d_with_grid, DEFAULT_W1_GRID};

/// Mean and standard error of a sample.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}
