use super::special::{digamma, log_gamma};
use crate::error::{Error, Result};

/// Gamma negative log-likelihood with log-mean `log_mean` and
/// log-dispersion `phi` (shape `κ = e^{−φ}`):
/// `log y + ln Γ(κ) − κ(log(y e^{−φ}) − log_mean) + y κ e^{−log_mean}`.
pub fn gamma_nll_value(y: f64, log_mean: f64, phi: f64) -> Result<f64> {
    check_y(y)?;
    let kappa = (-phi).exp();
    Ok(y.ln() + log_gamma(kappa)? - kappa * (y.ln() - phi - log_mean) + y * kappa * (-log_mean).exp())
}

/// `−log f_Y(y)` evaluated from the density
/// `f_Y = (yκ/μ)^κ e^{−yκ/μ} / (y Γ(κ))`.
pub fn gamma_density_nll(y: f64, mean: f64, phi: f64) -> Result<f64> {
    check_y(y)?;
    let kappa = (-phi).exp();
    let ratio = y * kappa / mean;
    Ok(-(kappa * ratio.ln() - ratio - y.ln() - log_gamma(kappa)?))
}

/// `(∂ℓ/∂log_mean, ∂ℓ/∂φ)`.
pub fn gamma_nll_partials(y: f64, log_mean: f64, phi: f64) -> Result<(f64, f64)> {
    check_y(y)?;
    let kappa = (-phi).exp();
    let scaled = y * (-log_mean).exp();
    let d_mean = kappa * (1.0 - scaled);
    let d_phi = -kappa * digamma(kappa)? + kappa * (y.ln() - phi - log_mean) + kappa - kappa * scaled;
    Ok((d_mean, d_phi))
}

fn check_y(y: f64) -> Result<()> {
    if y > 0.0 && y.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("Gamma response must be positive, got {y}")))
    }
}

/// Mean NLL of a constant log-mean `c` and dispersion `phi` over `ys`.
pub fn constant_model_nll(ys: &[f64], c: f64, phi: f64) -> Result<f64> {
    let mut acc = 0.0;
    for &y in ys {
        acc += gamma_nll_value(y, c, phi)?;
    }
    Ok(acc / ys.len() as f64)
}

/// Root of an increasing function by bisection on `[lo, hi]`.
fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    let (flo, fhi) = (f(lo)?, f(hi)?);
    if !(flo <= 0.0 && fhi >= 0.0) {
        return Err(Error::NumericalFailure(format!("no sign change on [{lo}, {hi}]")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if f(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Best constant model `(c, φ)`: `c` solves the mean stationarity
/// condition (closed form `log ȳ`) and `φ` the dispersion condition given
/// `c`, both by bisection on the analytic derivatives.
pub fn fit_constant_model(ys: &[f64]) -> Result<(f64, f64)> {
    if ys.is_empty() {
        return Err(Error::invalid("ys", "need at least one observation"));
    }
    let log_y: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let lo = log_y.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
    let hi = log_y.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    let mean_grad = |c: f64| -> Result<f64> {
        let mut acc = 0.0;
        for &y in ys {
            acc += gamma_nll_partials(y, c, 0.0)?.0;
        }
        Ok(acc / ys.len() as f64)
    };
    let c = bisect(lo, hi, mean_grad)?;
    let phi_grad = |phi: f64| -> Result<f64> {
        let mut acc = 0.0;
        for &y in ys {
            acc += gamma_nll_partials(y, c, phi)?.1;
        }
        Ok(acc / ys.len() as f64)
    };
    let phi = bisect(-15.0, 15.0, phi_grad)?;
    Ok((c, phi))
}
