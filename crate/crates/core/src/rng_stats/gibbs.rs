use std::io::Write;

use crate::error::{Error, Result};

/// Tabulated Gibbs law π_β ∝ exp(−β u) on a uniform grid.
#[derive(Clone, Debug)]
pub struct GibbsTable {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub cdf: Vec<f64>,
    pub beta: f64,
}

const ENDPOINT_LIMIT: f64 = 1e-12;

/// Tabulates π_β for the potential `u` on `[lo, hi]`.
///
/// Fails with [`Error::EndpointMass`] when the unnormalized density at either
/// endpoint exceeds 1e-12 of its maximum, i.e. the grid truncates real mass.
pub fn build_gibbs_table<U>(u: U, beta: f64, lo: f64, hi: f64, n_grid: usize) -> Result<GibbsTable>
where
    U: Fn(f64) -> f64,
{
    build(u, beta, lo, hi, n_grid, true)
}

/// Like [`build_gibbs_table`] but for a law supported on `[lo, hi]`, so no
/// endpoint check is made.
pub fn build_gibbs_table_clamped<U>(
    u: U,
    beta: f64,
    lo: f64,
    hi: f64,
    n_grid: usize,
) -> Result<GibbsTable>
where
    U: Fn(f64) -> f64,
{
    build(u, beta, lo, hi, n_grid, false)
}

fn build<U>(u: U, beta: f64, lo: f64, hi: f64, n_grid: usize, check_ends: bool) -> Result<GibbsTable>
where
    U: Fn(f64) -> f64,
{
    if !(beta > 0.0) {
        return Err(Error::invalid("beta", "must be positive"));
    }
    if !(hi > lo) {
        return Err(Error::invalid("hi", "must exceed lo"));
    }
    if n_grid < 1000 {
        return Err(Error::invalid("n_grid", "at least 1000 points are required"));
    }
    let h = (hi - lo) / (n_grid - 1) as f64;
    let grid: Vec<f64> = (0..n_grid).map(|i| lo + h * i as f64).collect();
    let log_w: Vec<f64> = grid.iter().map(|&t| -beta * u(t)).collect();
    if let Some(i) = log_w.iter().position(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure(format!(
            "potential is not finite at {}",
            grid[i]
        )));
    }
    let max_log = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut density: Vec<f64> = log_w.iter().map(|v| (v - max_log).exp()).collect();

    if check_ends {
        let ratio = density[0].max(density[n_grid - 1]);
        if ratio > ENDPOINT_LIMIT {
            return Err(Error::EndpointMass { ratio });
        }
    }

    let mut cdf = vec![0.0; n_grid];
    for i in 1..n_grid {
        cdf[i] = cdf[i - 1] + 0.5 * h * (density[i - 1] + density[i]);
    }
    let mass = cdf[n_grid - 1];
    for d in &mut density {
        *d /= mass;
    }
    for c in &mut cdf {
        *c /= mass;
    }
    cdf[n_grid - 1] = 1.0;

    Ok(GibbsTable {
        grid,
        density,
        cdf,
        beta,
    })
}

impl GibbsTable {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.grid[1] - self.grid[0]
    }

    fn trapezoid<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let h = self.spacing();
        let n = self.len();
        let mut acc = 0.0;
        for i in 1..n {
            acc += 0.5
                * h
                * (f(self.grid[i - 1]) * self.density[i - 1] + f(self.grid[i]) * self.density[i]);
        }
        acc
    }

    pub fn total_mass(&self) -> f64 {
        self.trapezoid(|_| 1.0)
    }

    pub fn mean(&self) -> f64 {
        self.trapezoid(|t| t)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.trapezoid(|t| (t - m) * (t - m))
    }

    /// Quantile function by linear interpolation of the tabulated CDF.
    pub fn quantile(&self, p: f64) -> f64 {
        let n = self.len();
        if p <= self.cdf[0] {
            return self.grid[0];
        }
        if p >= 1.0 {
            return self.grid[n - 1];
        }
        // first index with cdf >= p
        let j = self.cdf.partition_point(|&c| c < p);
        let (c0, c1) = (self.cdf[j - 1], self.cdf[j]);
        let (x0, x1) = (self.grid[j - 1], self.grid[j]);
        if c1 > c0 {
            x0 + (x1 - x0) * (p - c0) / (c1 - c0)
        } else {
            x0
        }
    }

    /// Writes `grid,density,cdf` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["grid", "density", "cdf"])?;
        for i in 0..self.len() {
            w.write_record([
                self.grid[i].to_string(),
                self.density[i].to_string(),
                self.cdf[i].to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<gibbs csv>", e))?;
        Ok(())
    }
}
