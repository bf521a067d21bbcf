use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::SeededRng;

/// How the initial wealth of each path is drawn.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialWealth {
    Fixed(f64),
    Uniform { lo: f64, hi: f64 },
}

impl InitialWealth {
    pub fn sample(&self, rng: &mut SeededRng) -> f64 {
        match *self {
            InitialWealth::Fixed(w) => w,
            InitialWealth::Uniform { lo, hi } => rng.uniform_range(lo, hi),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            InitialWealth::Fixed(w) => w,
            InitialWealth::Uniform { lo, hi } => 0.5 * (lo + hi),
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            InitialWealth::Fixed(_) => 0.0,
            InitialWealth::Uniform { lo, hi } => (hi - lo).powi(2) / 12.0,
        }
    }
}

/// Simulated episodes: initial wealth and `horizon × assets` excess returns
/// per path, stored path-major.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeBatch {
    pub horizon: usize,
    pub assets: usize,
    pub w0: Vec<f64>,
    pub returns: Vec<f64>,
    /// Lagged return fed to the first policy (AR(1) only; empty otherwise).
    pub lag0: Vec<f64>,
}

impl EpisodeBatch {
    pub fn len(&self) -> usize {
        self.w0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w0.is_empty()
    }

    /// `horizon × assets` returns of path `i`.
    pub fn path(&self, i: usize) -> &[f64] {
        let n = self.horizon * self.assets;
        &self.returns[i * n..(i + 1) * n]
    }

    pub fn return_at(&self, i: usize, k: usize) -> &[f64] {
        let start = (i * self.horizon + k) * self.assets;
        &self.returns[start..start + self.assets]
    }

    /// Paths `range` as a new batch.
    pub fn slice(&self, range: std::ops::Range<usize>) -> EpisodeBatch {
        let n = self.horizon * self.assets;
        EpisodeBatch {
            horizon: self.horizon,
            assets: self.assets,
            w0: self.w0[range.clone()].to_vec(),
            returns: self.returns[range.start * n..range.end * n].to_vec(),
            lag0: self.lag0.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_dim("episode returns", self.len() * self.horizon * self.assets, self.returns.len())?;
        if !self.lag0.is_empty() {
            check_dim("initial lag", self.assets, self.lag0.len())?;
        }
        Ok(())
    }
}

/// Discrete-time Black–Scholes excess returns
/// `R = exp((r̃ + Σλ̃ − ½diag(ΣΣᵀ))Δ + √Δ Σ ε) − R_f`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BsMarket {
    pub assets: usize,
    pub rate: f64,
    /// Row-major `assets × assets` volatility matrix applied to ε.
    pub sigma: Vec<f64>,
    pub risk_premium: Vec<f64>,
    pub dt: f64,
    pub horizon: usize,
    pub gamma: f64,
    pub action_lo: f64,
    pub action_hi: f64,
}

impl BsMarket {
    fn preset(assets: usize, dt: f64, horizon: usize, gamma: f64, hi: f64, off_diag: f64, premium: Vec<f64>) -> Self {
        let mut sigma = vec![off_diag; assets * assets];
        for i in 0..assets {
            sigma[i * assets + i] = 0.15;
        }
        Self {
            assets,
            rate: 0.03,
            sigma,
            risk_premium: premium,
            dt,
            horizon,
            gamma,
            action_lo: 0.0,
            action_hi: hi,
        }
    }

    /// Five assets, 40 periods of length 1/40, γ = 4, actions in [0, 1.5].
    pub fn five_assets() -> Self {
        Self::preset(5, 1.0 / 40.0, 40, 4.0, 1.5, 0.01, vec![0.1, 0.1, 0.2, 0.2, 0.2])
    }

    pub fn fifty_assets() -> Self {
        let premium = (0..50).map(|i| if i < 25 { 0.01 } else { 0.05 }).collect();
        Self::preset(50, 1.0 / 40.0, 40, 5.0, 1.5, 0.005, premium)
    }

    pub fn hundred_assets() -> Self {
        let premium = (0..100).map(|i| if i < 50 { 0.01 } else { 0.05 }).collect();
        Self::preset(100, 1.0 / 30.0, 30, 6.0, 0.5, 0.0025, premium)
    }

    pub fn by_assets(p: usize) -> Result<Self> {
        match p {
            5 => Ok(Self::five_assets()),
            50 => Ok(Self::fifty_assets()),
            100 => Ok(Self::hundred_assets()),
            _ => Err(Error::config("assets", format!("no Black-Scholes preset for {p} assets (5, 50, 100)"))),
        }
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    /// Gross risk-free return `exp(r̃Δ)`.
    pub fn risk_free(&self) -> f64 {
        (self.rate * self.dt).exp()
    }

    pub fn validate(&self) -> Result<()> {
        check_dim("sigma", self.assets * self.assets, self.sigma.len())?;
        check_dim("risk premium", self.assets, self.risk_premium.len())?;
        if !(self.dt > 0.0) || self.horizon == 0 {
            return Err(Error::config("market", "dt and horizon must be positive"));
        }
        if !(self.action_hi > self.action_lo) {
            return Err(Error::config("market", "action bounds need lo < hi"));
        }
        Ok(())
    }

    /// Per-period log drift `(r̃ + (Σλ̃)_i − ½(ΣΣᵀ)_ii)Δ`.
    fn log_drift(&self) -> Vec<f64> {
        let p = self.assets;
        (0..p)
            .map(|i| {
                let row = &self.sigma[i * p..(i + 1) * p];
                let sl: f64 = row.iter().zip(&self.risk_premium).map(|(s, l)| s * l).sum();
                let ss: f64 = row.iter().map(|s| s * s).sum();
                (self.rate + sl - 0.5 * ss) * self.dt
            })
            .collect()
    }

    /// Closed-form mean excess return `exp((r̃ + (Σλ̃)_i)Δ) − R_f`.
    pub fn mean_excess_return(&self) -> Vec<f64> {
        let p = self.assets;
        let rf = self.risk_free();
        (0..p)
            .map(|i| {
                let sl: f64 = self.sigma[i * p..(i + 1) * p]
                    .iter()
                    .zip(&self.risk_premium)
                    .map(|(s, l)| s * l)
                    .sum();
                ((self.rate + sl) * self.dt).exp() - rf
            })
            .collect()
    }

    pub fn sample(&self, n_paths: usize, w0: InitialWealth, rng: &mut SeededRng) -> EpisodeBatch {
        let p = self.assets;
        let drift = self.log_drift();
        let rf = self.risk_free();
        let sq = self.dt.sqrt();
        let mut eps = vec![0.0; p];
        let mut w = Vec::with_capacity(n_paths);
        let mut returns = Vec::with_capacity(n_paths * self.horizon * p);
        for _ in 0..n_paths {
            w.push(w0.sample(rng));
            for _ in 0..self.horizon {
                rng.fill_gauss(&mut eps);
                for i in 0..p {
                    let row = &self.sigma[i * p..(i + 1) * p];
                    let shock: f64 = row.iter().zip(&eps).map(|(s, e)| s * e).sum();
                    returns.push((drift[i] + sq * shock).exp() - rf);
                }
            }
        }
        EpisodeBatch {
            horizon: self.horizon,
            assets: p,
            w0: w,
            returns,
            lag0: Vec::new(),
        }
    }
}

/// Lower-triangular factor `L` with `LLᵀ = m`; semidefinite inputs are
/// accepted (zero pivots give zero columns).
pub fn cholesky(m: &[f64], n: usize) -> Result<Vec<f64>> {
    check_dim("cholesky input", n * n, m.len())?;
    let scale = (0..n).map(|i| m[i * n + i].abs()).fold(0.0, f64::max).max(1e-300);
    let tol = 1e-12 * scale;
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            if (m[i * n + j] - m[j * n + i]).abs() > 1e-12 * scale {
                return Err(Error::NotPositiveSemidefinite { pivot: j, value: f64::NAN });
            }
        }
        let mut d = m[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if d < -tol {
            return Err(Error::NotPositiveSemidefinite { pivot: j, value: d });
        }
        let ljj = d.max(0.0).sqrt();
        l[j * n + j] = ljj;
        for i in j + 1..n {
            let mut s = m[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = if ljj > 0.0 { s / ljj } else { 0.0 };
        }
    }
    Ok(l)
}

/// AR(1) excess returns `R_k = α + A R_{k−1} + ε_k`, `ε_k ~ N(0, Σ̄)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ar1Market {
    pub assets: usize,
    pub horizon: usize,
    pub alpha: Vec<f64>,
    /// Row-major `assets × assets`.
    pub coef: Vec<f64>,
    pub noise_cov: Vec<f64>,
    pub initial_lag: Vec<f64>,
    pub risk_free: f64,
    pub gamma: f64,
    pub action_lo: f64,
    pub action_hi: f64,
    #[serde(skip)]
    chol: Vec<f64>,
}

impl Ar1Market {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        assets: usize,
        horizon: usize,
        alpha: Vec<f64>,
        coef: Vec<f64>,
        noise_cov: Vec<f64>,
        initial_lag: Vec<f64>,
        risk_free: f64,
        gamma: f64,
        action_lo: f64,
        action_hi: f64,
    ) -> Result<Self> {
        check_dim("alpha", assets, alpha.len())?;
        check_dim("AR coefficient", assets * assets, coef.len())?;
        check_dim("initial lag", assets, initial_lag.len())?;
        let chol = cholesky(&noise_cov, assets)?;
        Ok(Self {
            assets,
            horizon,
            alpha,
            coef,
            noise_cov,
            initial_lag,
            risk_free,
            gamma,
            action_lo,
            action_hi,
            chol,
        })
    }

    /// Thirty assets, ten periods, diagonal coefficient −0.15 and the lag
    /// started at the stationary mean.
    pub fn thirty_assets() -> Self {
        let p = 30;
        let alpha = vec![0.015; p];
        let mut coef = vec![0.0; p * p];
        let mut cov = vec![0.0027; p * p];
        for i in 0..p {
            coef[i * p + i] = -0.15;
            cov[i * p + i] = 0.0238;
        }
        let lag = alpha.iter().map(|a| a / 1.15).collect();
        Self::new(p, 10, alpha, coef, cov, lag, 1.03, 15.0, 0.0, 1.0).expect("valid preset")
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    /// Recomputes the noise factor, e.g. after deserialization.
    pub fn refresh(mut self) -> Result<Self> {
        self.chol = cholesky(&self.noise_cov, self.assets)?;
        Ok(self)
    }

    pub fn sample(&self, n_paths: usize, w0: InitialWealth, rng: &mut SeededRng) -> EpisodeBatch {
        let p = self.assets;
        let mut eps = vec![0.0; p];
        let mut prev = vec![0.0; p];
        let mut cur = vec![0.0; p];
        let mut w = Vec::with_capacity(n_paths);
        let mut returns = Vec::with_capacity(n_paths * self.horizon * p);
        for _ in 0..n_paths {
            w.push(w0.sample(rng));
            prev.copy_from_slice(&self.initial_lag);
            for _ in 0..self.horizon {
                rng.fill_gauss(&mut eps);
                for i in 0..p {
                    let a_row = &self.coef[i * p..(i + 1) * p];
                    let l_row = &self.chol[i * p..i * p + i + 1];
                    let ar: f64 = a_row.iter().zip(&prev).map(|(a, r)| a * r).sum();
                    let noise: f64 = l_row.iter().zip(&eps).map(|(l, e)| l * e).sum();
                    cur[i] = self.alpha[i] + ar + noise;
                }
                returns.extend_from_slice(&cur);
                std::mem::swap(&mut prev, &mut cur);
            }
        }
        EpisodeBatch {
            horizon: self.horizon,
            assets: p,
            w0: w,
            returns,
            lag0: self.initial_lag.clone(),
        }
    }
}
