//! Tamed Langevin stochastic optimization.
//!
//! The centrepiece is e-THεO POULA, a Langevin-type update that tames and
//! boosts the discontinuous part `G` of a stochastic gradient componentwise
//! and tames the locally Lipschitz part `F` by `1 + √λ|θ|^{2r}`. The crate
//! also carries SGLD, TUSLA, ADAM and AMSGrad for comparison, the objective
//! families the optimizer is designed for (quantile, vector quantization,
//! CVaR, ReLU regression, multi-period portfolio policies, Gamma regression),
//! diagnostics for Gibbs-law convergence, and an experiment harness.

pub mod error;
pub mod gamma_regression;
pub mod harness;
pub mod neuralnet;
pub mod objectives;
pub mod optimizers;
pub mod portfolio;
pub mod rng_stats;
pub mod theory;

pub use error::{Error, Result};
pub use optimizers::{GradPair, OptimizerConfig, OptimizerKind, OptimizerState};
pub use rng_stats::SeededRng;

/// Flat parameter vector θ ∈ ℝ^d.
pub type ParamVector = Vec<f64>;
