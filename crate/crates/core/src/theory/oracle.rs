use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::objectives::{mc_objective_pool, StochasticObjective};
use crate::SeededRng;

/// Zoom levels of the brute-force search; each level narrows the box 10×.
pub const ORACLE_LEVELS: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct OracleMinimum {
    pub theta: Vec<f64>,
    pub value: f64,
    /// Grid spacing of the final level in each coordinate.
    pub resolution: Vec<f64>,
}

/// Brute-force minimum of a deterministic `u` over the box `[lo, hi]` (one
/// or two coordinates), refined over [`ORACLE_LEVELS`] levels.
pub fn grid_oracle_minimum<U>(u: U, lo: &[f64], hi: &[f64], n_grid: usize) -> Result<OracleMinimum>
where
    U: Fn(&[f64]) -> f64 + Sync,
{
    let d = lo.len();
    if d == 0 || d > 2 || hi.len() != d {
        return Err(Error::invalid("theta", "the grid oracle handles one or two coordinates"));
    }
    if n_grid < 3 {
        return Err(Error::invalid("n_grid", "needs at least 3 points"));
    }
    if lo.iter().zip(hi).any(|(l, h)| !(h > l)) {
        return Err(Error::invalid("hi", "must exceed lo in every coordinate"));
    }
    let mut box_lo = lo.to_vec();
    let mut box_hi = hi.to_vec();
    let mut best = (Vec::new(), f64::INFINITY);
    let mut step = vec![0.0; d];
    for _ in 0..ORACLE_LEVELS {
        for i in 0..d {
            step[i] = (box_hi[i] - box_lo[i]) / (n_grid - 1) as f64;
        }
        let total = n_grid.pow(d as u32);
        let point = |idx: usize| -> Vec<f64> {
            let mut t = vec![0.0; d];
            let mut rest = idx;
            for i in 0..d {
                t[i] = box_lo[i] + step[i] * (rest % n_grid) as f64;
                rest /= n_grid;
            }
            t
        };
        let values: Vec<f64> = (0..total).into_par_iter().map(|idx| u(&point(idx))).collect();
        let (arg, val) = values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, v)| (i, *v))
            .ok_or_else(|| Error::NumericalFailure("objective is not finite anywhere on the grid".into()))?;
        if val < best.1 {
            best = (point(arg), val);
        }
        for i in 0..d {
            let half = 0.05 * (box_hi[i] - box_lo[i]);
            box_lo[i] = (best.0[i] - half).max(lo[i]);
            box_hi[i] = (best.0[i] + half).min(hi[i]);
        }
    }
    Ok(OracleMinimum {
        theta: best.0,
        value: best.1,
        resolution: step,
    })
}

/// The oracle applied to a Monte Carlo estimate of `u` over one sample pool
/// shared by every grid point. Returns the pool for evaluating iterates on
/// the same draws.
pub fn grid_oracle_mc<O: StochasticObjective>(
    objective: &O,
    lo: &[f64],
    hi: &[f64],
    n_grid: usize,
    n_samples: usize,
    rng: &mut SeededRng,
) -> Result<(OracleMinimum, Vec<O::Sample>)> {
    check_dim("oracle box", objective.dim(), lo.len())?;
    let pool = objective.sample_n(n_samples, rng);
    let min = grid_oracle_minimum(|t| mc_objective_pool(t, objective, &pool).mean, lo, hi, n_grid)?;
    Ok((min, pool))
}
