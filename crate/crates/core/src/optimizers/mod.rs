//! Iterate-update rules: e-THεO POULA, SGLD, TUSLA, ADAM and AMSGrad.
//!
//! Every rule exists as a pure step function over explicit arguments
//! (`*_step`) and as an in-place variant (`*_update`) used by the training
//! loops. [`Optimizer`] bundles a rule with its state and the learning-rate
//! schedule.

mod adaptive;
mod langevin;
mod taming;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{ParamVector, SeededRng};

pub use adaptive::{adam_step, adam_update, amsgrad_step, amsgrad_update};
pub use langevin::{
    etheo_poula_step, etheo_poula_update, sgld_step, sgld_update, tusla_step, tusla_update,
};
pub use taming::{tame_f, tame_f_scale, tame_g_component};

/// The split H(θ, x) = G(θ, x) + F(θ, x) of one stochastic gradient: `g` is
/// the (possibly discontinuous) loss gradient and `f` the locally Lipschitz
/// regularizer gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct GradPair {
    pub g: ParamVector,
    pub f: ParamVector,
}

impl GradPair {
    pub fn zeros(dim: usize) -> Self {
        Self {
            g: vec![0.0; dim],
            f: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn total(&self) -> ParamVector {
        self.g.iter().zip(&self.f).map(|(g, f)| g + f).collect()
    }

    pub fn add_assign(&mut self, other: &GradPair) {
        for (a, b) in self.g.iter_mut().zip(&other.g) {
            *a += b;
        }
        for (a, b) in self.f.iter_mut().zip(&other.f) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.g.iter_mut().chain(self.f.iter_mut()).for_each(|v| *v *= s);
    }

    /// Arithmetic mean of per-sample gradient pairs.
    pub fn mean_of(pairs: &[GradPair]) -> GradPair {
        assert!(!pairs.is_empty());
        let mut acc = GradPair::zeros(pairs[0].dim());
        for p in pairs {
            acc.add_assign(p);
        }
        acc.scale(1.0 / pairs.len() as f64);
        acc
    }

    pub fn is_finite(&self) -> bool {
        self.g.iter().chain(&self.f).all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    EtheoPoula,
    Sgld,
    Tusla,
    Adam,
    Amsgrad,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 5] = [
        OptimizerKind::EtheoPoula,
        OptimizerKind::Sgld,
        OptimizerKind::Tusla,
        OptimizerKind::Adam,
        OptimizerKind::Amsgrad,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            OptimizerKind::EtheoPoula => "etheo_poula",
            OptimizerKind::Sgld => "sgld",
            OptimizerKind::Tusla => "tusla",
            OptimizerKind::Adam => "adam",
            OptimizerKind::Amsgrad => "amsgrad",
        }
    }

    /// Whether the rule injects Gaussian noise.
    pub fn is_langevin(self) -> bool {
        matches!(
            self,
            OptimizerKind::EtheoPoula | OptimizerKind::Sgld | OptimizerKind::Tusla
        )
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OptimizerKind::ALL
            .into_iter()
            .find(|k| k.tag() == s)
            .ok_or_else(|| {
                Error::config(
                    "optimizer",
                    format!(
                        "unknown optimizer `{s}` (expected one of etheo_poula, sgld, tusla, adam, amsgrad)"
                    ),
                )
            })
    }
}

/// Hyperparameters shared by all five rules; each rule reads the fields it
/// needs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    /// Step size λ.
    pub lambda: f64,
    /// Inverse temperature β.
    pub beta: f64,
    /// Boosting offset ε.
    pub epsilon: f64,
    /// Taming exponent r.
    pub r: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// λ is divided by this factor from epoch `lr_decay_epoch` onwards.
    pub lr_decay_factor: f64,
    pub lr_decay_epoch: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lambda: 0.01,
            beta: 1e12,
            epsilon: 1e-8,
            r: 0.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            lr_decay_factor: 1.0,
            lr_decay_epoch: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_r(mut self, r: f64) -> Self {
        self.r = r;
        self
    }

    pub fn with_decay(mut self, factor: f64, epoch: usize) -> Self {
        self.lr_decay_factor = factor;
        self.lr_decay_epoch = epoch;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name: &str, reason: &str| Err(Error::config(name, reason));
        if !(self.lambda > 0.0) {
            return bad("lambda", "must be positive");
        }
        if !(self.beta > 0.0) {
            return bad("beta", "must be positive");
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad("epsilon", "must lie in (0, 1)");
        }
        if !(self.r >= 0.0) {
            return bad("r", "must be nonnegative");
        }
        if !(self.adam_beta1 > 0.0 && self.adam_beta1 < 1.0) {
            return bad("adam_beta1", "must lie in (0, 1)");
        }
        if !(self.adam_beta2 > 0.0 && self.adam_beta2 < 1.0) {
            return bad("adam_beta2", "must lie in (0, 1)");
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam_eps", "must be positive");
        }
        if !(self.lr_decay_factor > 0.0) {
            return bad("lr_decay_factor", "must be positive");
        }
        Ok(())
    }

    /// Step size in force during `epoch` (0-based).
    pub fn lambda_at(&self, epoch: usize) -> f64 {
        if self.lr_decay_epoch > 0 && epoch >= self.lr_decay_epoch {
            self.lambda / self.lr_decay_factor
        } else {
            self.lambda
        }
    }

    /// Copy with λ replaced by the decayed value for `epoch`.
    pub fn at_epoch(&self, epoch: usize) -> Self {
        self.with_lambda(self.lambda_at(epoch))
    }

    /// Per-component standard deviation √(2λ/β) of the injected noise.
    pub fn noise_scale(&self) -> f64 {
        (2.0 * self.lambda / self.beta).sqrt()
    }
}

/// Mutable moment estimates of the adaptive baselines.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub step_count: u64,
    pub first_moment: ParamVector,
    pub second_moment: ParamVector,
    pub max_second_moment: ParamVector,
}

impl OptimizerState {
    pub fn new(dim: usize) -> Self {
        Self {
            step_count: 0,
            first_moment: vec![0.0; dim],
            second_moment: vec![0.0; dim],
            max_second_moment: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.first_moment.len()
    }
}

/// A rule, its hyperparameters and state, advanced in place.
#[derive(Clone, Debug)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub config: OptimizerConfig,
    pub state: OptimizerState,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, config: OptimizerConfig, dim: usize) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            kind,
            config,
            state: OptimizerState::new(dim),
        })
    }

    /// One update of `theta` with the λ scheduled for `epoch`.
    pub fn step(&mut self, theta: &mut [f64], grad: &GradPair, epoch: usize, rng: &mut SeededRng) {
        let cfg = self.config.at_epoch(epoch);
        match self.kind {
            OptimizerKind::EtheoPoula => etheo_poula_update(theta, grad, &cfg, rng),
            OptimizerKind::Sgld => sgld_update(theta, grad, &cfg, rng),
            OptimizerKind::Tusla => tusla_update(theta, grad, &cfg, rng),
            OptimizerKind::Adam => adam_update(theta, grad, &mut self.state, &cfg),
            OptimizerKind::Amsgrad => amsgrad_update(theta, grad, &mut self.state, &cfg),
        }
    }
}
