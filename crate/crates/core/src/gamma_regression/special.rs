use crate::error::{Error, Result};

/// Lanczos series `Γ(x) = √(2π) t^{x−½} e^{−t} A(x)`, `t = x + g − ½`,
/// `A(x) = c₀ + Σ_{k≥1} c_k / (x + k − 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LanczosCoefficients {
    pub g: f64,
    pub c: Vec<f64>,
}

impl Default for LanczosCoefficients {
    /// Godfrey's g = 7, nine-term set.
    fn default() -> Self {
        Self {
            g: 7.0,
            c: vec![
                0.999_999_999_999_809_93,
                676.520_368_121_885_1,
                -1_259.139_216_722_402_8,
                771.323_428_777_653_13,
                -176.615_029_162_140_59,
                12.507_343_278_686_905,
                -0.138_571_095_265_720_12,
                9.984_369_578_019_571_6e-6,
                1.505_632_735_149_311_6e-7,
            ],
        }
    }
}

impl LanczosCoefficients {
    fn series(&self, x: f64) -> f64 {
        let mut acc = self.c[0];
        for (k, ck) in self.c.iter().enumerate().skip(1) {
            acc += ck / (x + (k - 1) as f64);
        }
        acc
    }
}

/// Unevaluated sum `hi + lo` with `|lo| ≤ ulp(hi)/2`.
#[derive(Clone, Copy, Debug)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    fn from(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    fn two_sum(a: f64, b: f64) -> Self {
        let s = a + b;
        let bb = s - a;
        Dd { hi: s, lo: (a - (s - bb)) + (b - bb) }
    }

    fn quick(a: f64, b: f64) -> Self {
        let s = a + b;
        Dd { hi: s, lo: b - (s - a) }
    }

    fn add(self, o: Dd) -> Dd {
        let s = Dd::two_sum(self.hi, o.hi);
        let t = Dd::two_sum(self.lo, o.lo);
        let s = Dd::quick(s.hi, s.lo + t.hi);
        Dd::quick(s.hi, s.lo + t.lo)
    }

    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }

    fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        Dd::quick(p, e + (self.hi * o.lo + self.lo * o.hi))
    }

    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.add(o.mul(Dd::from(q1)).neg());
        let q2 = r.hi / o.hi;
        let r = r.add(o.mul(Dd::from(q2)).neg());
        let q3 = r.hi / o.hi;
        Dd::quick(q1, q2).add(Dd::from(q3))
    }

    fn scale(self, s: f64) -> Dd {
        Dd { hi: self.hi * s, lo: self.lo * s }
    }

    fn value(self) -> f64 {
        self.hi + self.lo
    }
}

const LN2: Dd = Dd { hi: std::f64::consts::LN_2, lo: 2.319_046_813_846_299_6e-17 };

/// Natural log to roughly 30 significant digits for positive finite input.
fn ln_dd(t: Dd) -> Dd {
    // t = m·2^e with m ∈ [1/√2, √2)
    let mut e = t.hi.log2().round();
    let mut m = t.scale((-e).exp2());
    if m.hi > std::f64::consts::SQRT_2 {
        m = m.scale(0.5);
        e += 1.0;
    } else if m.hi < std::f64::consts::FRAC_1_SQRT_2 {
        m = m.scale(2.0);
        e -= 1.0;
    }
    // ln m = 2 atanh(s), s = (m − 1)/(m + 1), |s| < 0.172
    let s = m.add(Dd::from(-1.0)).div(m.add(Dd::from(1.0)));
    let s2 = s.mul(s);
    let mut term = s;
    let mut sum = s;
    for k in 1..=24 {
        term = term.mul(s2);
        let contrib = term.div(Dd::from((2 * k + 1) as f64));
        sum = sum.add(contrib);
        if contrib.hi.abs() < 1e-34 * sum.hi.abs().max(1e-300) {
            break;
        }
    }
    LN2.mul(Dd::from(e)).add(sum.scale(2.0))
}

fn check_positive(x: f64, what: &str) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} needs a positive finite argument, got {x}")))
    }
}

/// `ln Γ(x)` for `x > 0` with the default coefficients.
pub fn log_gamma(x: f64) -> Result<f64> {
    log_gamma_with(x, &LanczosCoefficients::default())
}

/// `ln Γ(x)` with the dominant terms `(x − ½) ln t − t` in double-double
/// arithmetic so that large arguments stay correctly rounded.
pub fn log_gamma_with(x: f64, coef: &LanczosCoefficients) -> Result<f64> {
    check_positive(x, "log_gamma")?;
    if x < 0.5 {
        // ln Γ(x) = ln Γ(x + 1) − ln x keeps the series in its accurate range
        return Ok(log_gamma_with(x + 1.0, coef)? - x.ln());
    }
    let t = Dd::two_sum(x, coef.g - 0.5);
    let head = Dd::two_sum(x, -0.5).mul(ln_dd(t)).add(t.neg());
    let tail = (0.5 * (2.0 * std::f64::consts::PI).ln()) + coef.series(x).ln();
    Ok(head.add(Dd::from(tail)).value())
}

/// `ψ(x) = d/dx ln Γ(x)` by upward recurrence to `x ≥ 10` and the
/// asymptotic series.
pub fn digamma(x: f64) -> Result<f64> {
    check_positive(x, "digamma")?;
    let mut x = x;
    let mut shift = 0.0;
    while x < 10.0 {
        shift -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // B_{2k}/(2k) for k = 1..7
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32_760.0 - inv2 / 12.0))))));
    Ok(shift + x.ln() - 0.5 * inv - series)
}

/// Reference table shipped with the crate: `(x, ln Γ(x), ψ(x))`.
pub fn reference_values() -> Vec<(f64, f64, f64)> {
    include_str!("../../data/special_reference.csv")
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(|s| s.trim().parse().expect("reference table")).collect();
            (v[0], v[1], v[2])
        })
        .collect()
}

/// Largest absolute errors of `log_gamma_with` and `digamma` over the
/// reference table.
pub fn reference_errors(coef: &LanczosCoefficients) -> Result<(f64, f64)> {
    let mut lg: f64 = 0.0;
    let mut dg: f64 = 0.0;
    for (x, l, d) in reference_values() {
        lg = lg.max((log_gamma_with(x, coef)? - l).abs());
        dg = dg.max((digamma(x)? - d).abs());
    }
    Ok((lg, dg))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        assert!(log_gamma(1.0).unwrap().abs() < 1e-14, "{:e}", log_gamma(1.0).unwrap());
        assert!(log_gamma(2.0).unwrap().abs() < 1e-14);
        assert!((log_gamma(0.5).unwrap() - 0.572_364_942_924_700_1).abs() < 1e-14);
        assert!((log_gamma(10.0).unwrap() - 362_880f64.ln()).abs() < 1e-13);
        let euler = 0.577_215_664_901_532_9;
        assert!((digamma(1.0).unwrap() + euler).abs() < 1e-14);
        assert!((digamma(2.0).unwrap() - (1.0 - euler)).abs() < 1e-14);
    }

    #[test]
    fn domain_errors() {
        for x in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(matches!(log_gamma(x), Err(Error::Domain(_))));
            assert!(matches!(digamma(x), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn reference_table_accuracy() {
        let table = reference_values();
        assert_eq!(table.len(), 50);
        let (lg, dg) = reference_errors(&LanczosCoefficients::default()).unwrap();
        assert!(lg <= 1e-12, "log_gamma {lg:e}");
        assert!(dg <= 1e-10, "digamma {dg:e}");
    }

    #[test]
    fn corrupted_coefficient_is_detected() {
        let mut coef = LanczosCoefficients::default();
        coef.c[3] *= 1.0 + 1e-9;
        let (lg, _) = reference_errors(&coef).unwrap();
        assert!(lg > 1e-12, "{lg:e}");
    }

    #[test]
    fn digamma_is_the_derivative() {
        let mut x: f64 = 0.01;
        while x < 1e5 {
            let h = 1e-5 * x;
            let fd = (log_gamma(x + h).unwrap() - log_gamma(x - h).unwrap()) / (2.0 * h);
            let d = digamma(x).unwrap();
            assert!((fd - d).abs() < 1e-6 * d.abs().max(1.0), "x={x}: {fd} vs {d}");
            x *= 3.7;
        }
        let h = 1e-6;
        let fd = (log_gamma(3.0 + h).unwrap() - log_gamma(3.0 - h).unwrap()) / (2.0 * h);
        assert!((fd - digamma(3.0).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn double_double_log() {
        for x in [0.3, 1.0, 2.0, 7.5, 1e6 + 6.5, 123_456.789] {
            let l = ln_dd(Dd::from(x));
            assert!((l.value() - x.ln()).abs() <= 2.0 * f64::EPSILON * x.ln().abs().max(1.0), "{x}");
        }
        // ln(1 + 2^-40) needs the low word
        let t = Dd::two_sum(1.0, 2f64.powi(-40));
        let l = ln_dd(t);
        let exact = 2f64.powi(-40) - 2f64.powi(-81);
        assert!((l.value() - exact).abs() < 1e-30);
    }

    #[test]
    fn double_double_log_is_accurate() {
        let l = ln_dd(Dd::two_sum(1e6, 6.5));
        let err = (l.hi - 13.815_517_057_943_149) + (l.lo - 4.246_893_177_412_519e-16);
        assert!(err.abs() < 1e-29, "{err:e}");
        let one = ln_dd(Dd::from(1.0));
        assert_eq!((one.hi, one.lo), (0.0, 0.0));
    }
}
