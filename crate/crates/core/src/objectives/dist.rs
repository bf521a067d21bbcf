use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::SeededRng;

/// One-dimensional data law, written in configs as `uniform(a,b)` or
/// `gaussian(mean,sd)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ScalarDist {
    Uniform { lo: f64, hi: f64 },
    Gaussian { mean: f64, sd: f64 },
}

impl ScalarDist {
    pub const UNIT_UNIFORM: ScalarDist = ScalarDist::Uniform { lo: 0.0, hi: 1.0 };
    pub const STANDARD_NORMAL: ScalarDist = ScalarDist::Gaussian { mean: 0.0, sd: 1.0 };

    pub fn validate(&self) -> Result<()> {
        match *self {
            ScalarDist::Uniform { lo, hi } if !(hi > lo) => {
                Err(Error::invalid("uniform", format!("needs lo < hi, got ({lo}, {hi})")))
            }
            ScalarDist::Gaussian { sd, .. } if !(sd >= 0.0) => {
                Err(Error::invalid("gaussian", format!("needs sd >= 0, got {sd}")))
            }
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn sample(&self, rng: &mut SeededRng) -> f64 {
        match *self {
            ScalarDist::Uniform { lo, hi } => rng.uniform_range(lo, hi),
            ScalarDist::Gaussian { mean, sd } => mean + sd * rng.gauss(),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            ScalarDist::Uniform { lo, hi } => 0.5 * (lo + hi),
            ScalarDist::Gaussian { mean, .. } => mean,
        }
    }

    /// Support interval used to bracket grid searches: the full interval for
    /// the uniform law, mean ± 8 sd for the Gaussian.
    pub fn bracket(&self) -> (f64, f64) {
        match *self {
            ScalarDist::Uniform { lo, hi } => (lo, hi),
            ScalarDist::Gaussian { mean, sd } => (mean - 8.0 * sd, mean + 8.0 * sd),
        }
    }
}

impl fmt::Display for ScalarDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarDist::Uniform { lo, hi } => write!(f, "uniform({lo},{hi})"),
            ScalarDist::Gaussian { mean, sd } => write!(f, "gaussian({mean},{sd})"),
        }
    }
}

impl From<ScalarDist> for String {
    fn from(d: ScalarDist) -> String {
        d.to_string()
    }
}

impl TryFrom<String> for ScalarDist {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for ScalarDist {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid("data_dist", format!("cannot parse `{s}`"));
        let s = s.trim();
        let open = s.find('(').ok_or_else(bad)?;
        let inner = s[open + 1..].strip_suffix(')').ok_or_else(bad)?;
        let args: Vec<f64> = inner
            .split(',')
            .map(|a| a.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad())?;
        if args.len() != 2 {
            return Err(bad());
        }
        let dist = match s[..open].trim() {
            "uniform" => ScalarDist::Uniform { lo: args[0], hi: args[1] },
            "gaussian" | "normal" => ScalarDist::Gaussian { mean: args[0], sd: args[1] },
            _ => return Err(bad()),
        };
        dist.validate()?;
        Ok(dist)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        let u: ScalarDist = "uniform(0, 1)".parse().unwrap();
        assert_eq!(u, ScalarDist::UNIT_UNIFORM);
        let g: ScalarDist = "gaussian(1.5,0.2)".parse().unwrap();
        assert_eq!(g.to_string().parse::<ScalarDist>().unwrap(), g);
        assert!("uniform(1,0)".parse::<ScalarDist>().is_err());
        assert!("cauchy(0,1)".parse::<ScalarDist>().is_err());
        assert!("uniform(0)".parse::<ScalarDist>().is_err());
    }

    #[test]
    fn serde_uses_the_string_form() {
        let json = serde_json::to_string(&ScalarDist::STANDARD_NORMAL).unwrap();
        assert_eq!(json, "\"gaussian(0,1)\"");
        let back: ScalarDist = serde_json::from_str(&json).unwrap();
        assert_eq!(back, ScalarDist::STANDARD_NORMAL);
    }
}
