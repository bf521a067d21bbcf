use std::io::{Read, Write};

use rand_distr::{Distribution, Gamma};

use crate::error::{check_dim, Error, Result};
use crate::harness::fmt_f64;
use crate::SeededRng;

/// Responses `y` and row-major covariates `z` (`len × m`).
#[derive(Clone, Debug, PartialEq)]
pub struct GammaDataset {
    pub m: usize,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

impl GammaDataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn z_row(&self, i: usize) -> &[f64] {
        &self.z[i * self.m..(i + 1) * self.m]
    }

    /// First `n_first` rows and the rest.
    pub fn split(&self, n_first: usize) -> (GammaDataset, GammaDataset) {
        let n = n_first.min(self.len());
        (
            GammaDataset { m: self.m, y: self.y[..n].to_vec(), z: self.z[..n * self.m].to_vec() },
            GammaDataset { m: self.m, y: self.y[n..].to_vec(), z: self.z[n * self.m..].to_vec() },
        )
    }

    /// Header `y,z1,..,zm`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let header: Vec<String> = std::iter::once("y".to_string()).chain((1..=self.m).map(|j| format!("z{j}"))).collect();
        w.write_record(&header)?;
        for i in 0..self.len() {
            let row: Vec<String> = std::iter::once(self.y[i]).chain(self.z_row(i).iter().copied()).map(fmt_f64).collect();
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("gamma dataset", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let m = r.headers()?.len().saturating_sub(1);
        let mut data = GammaDataset { m, y: Vec::new(), z: Vec::new() };
        for rec in r.records() {
            let rec = rec?;
            check_dim("dataset row", m + 1, rec.len())?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|e| Error::invalid("dataset", format!("{s}: {e}"))))
                .collect::<Result<_>>()?;
            data.y.push(vals[0]);
            data.z.extend_from_slice(&vals[1..]);
        }
        Ok(data)
    }
}

/// `log μ(z) = 1 + sin(π z₁) + ½ z₂²`.
pub fn default_log_mean(z: &[f64]) -> f64 {
    1.0 + (std::f64::consts::PI * z[0]).sin() + 0.5 * z[1] * z[1]
}

/// `z ~ U[−1, 1]^m`, `y | z ~ Gamma(shape, mean = exp(log_mean(z)))`, drawn
/// with the Marsaglia–Tsang sampler of `rand_distr`.
pub fn synth_gamma_data(
    n: usize,
    m: usize,
    shape: f64,
    log_mean: impl Fn(&[f64]) -> f64,
    rng: &mut SeededRng,
) -> Result<GammaDataset> {
    if !(shape > 0.0 && shape.is_finite()) {
        return Err(Error::invalid("shape_true", "must be positive"));
    }
    let unit = Gamma::new(shape, 1.0 / shape).map_err(|e| Error::invalid("shape_true", e.to_string()))?;
    let mut data = GammaDataset { m, y: Vec::with_capacity(n), z: Vec::with_capacity(n * m) };
    let mut z = vec![0.0; m];
    for _ in 0..n {
        z.iter_mut().for_each(|v| *v = rng.uniform_range(-1.0, 1.0));
        let mean = log_mean(&z).exp();
        let g: f64 = unit.sample(rng);
        data.y.push(mean * g.max(f64::MIN_POSITIVE));
        data.z.extend_from_slice(&z);
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_stats::mean_and_se;

    #[test]
    fn conditional_mean_by_bin() {
        let data = synth_gamma_data(1_000_000, 2, 2.0, default_log_mean, &mut SeededRng::new(1)).unwrap();
        // bins on z₁ with z₂ integrated out: E[y | z₁] = e^{1 + sin πz₁} E[e^{z₂²/2}]
        let e_z2 = {
            // ∫_{-1}^{1} e^{t²/2} dt / 2 by Simpson
            let n = 2000;
            let h = 2.0 / n as f64;
            let f = |t: f64| (0.5 * t * t).exp();
            let mut s = f(-1.0) + f(1.0);
            for k in 1..n {
                s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(-1.0 + k as f64 * h);
            }
            s * h / 3.0 / 2.0
        };
        for lo in [-0.9, -0.3, 0.4] {
            let hi: f64 = lo + 0.05;
            let ys: Vec<f64> = (0..data.len()).filter(|&i| (lo..hi).contains(&data.z_row(i)[0])).map(|i| data.y[i]).collect();
            let (mean, se) = mean_and_se(&ys);
            // average of e^{sin πz₁} over the bin
            let n = 200;
            let avg: f64 = (0..n).map(|k| lo + (k as f64 + 0.5) * 0.05 / n as f64).map(|t| (std::f64::consts::PI * t).sin().exp()).sum::<f64>() / n as f64;
            let expected = 1f64.exp() * avg * e_z2;
            assert!((mean - expected).abs() < 3.0 * se, "bin {lo}: {mean} vs {expected} ± {se}");
        }
    }

    #[test]
    fn large_shape_concentrates() {
        let data = synth_gamma_data(20_000, 2, 1e4, |_| 0.0, &mut SeededRng::new(2)).unwrap();
        let (mean, _) = mean_and_se(&data.y);
        let sd = (data.y.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / data.len() as f64).sqrt();
        assert!((sd / mean - 0.01).abs() < 0.0005, "{}", sd / mean);
    }

    #[test]
    fn reproducible_and_csv_round_trip() {
        let a = synth_gamma_data(50, 3, 2.0, default_log_mean, &mut SeededRng::new(3)).unwrap();
        let b = synth_gamma_data(50, 3, 2.0, default_log_mean, &mut SeededRng::new(3)).unwrap();
        assert_eq!(a, b);
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("y,z1,z2,z3\n"));
        assert_eq!(GammaDataset::read_csv(buf.as_slice()).unwrap(), a);
        let (tr, te) = a.split(35);
        assert_eq!((tr.len(), te.len()), (35, 15));
        assert!(synth_gamma_data(5, 2, 0.0, default_log_mean, &mut SeededRng::new(0)).is_err());
    }
}
