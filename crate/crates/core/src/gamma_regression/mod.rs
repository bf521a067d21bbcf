//! Gamma regression with a log-link two-hidden-layer Leaky-ReLU network:
//! the mean is `exp(N(z))`, the dispersion `e^φ` is learned jointly, and
//! the loss is the Gamma negative log-likelihood. Includes the special
//! functions it needs and a synthetic data generator with a known mean.

mod data;
mod nll;
mod special;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::harness::{EpochRow, RunRecord};
use crate::neuralnet::{Activation, DenseNet, Tape};
use crate::objectives::{regularizer_grad, regularizer_value};
use crate::optimizers::{GradPair, Optimizer, OptimizerConfig, OptimizerKind};
use crate::SeededRng;

pub use data::{default_log_mean, synth_gamma_data, GammaDataset};
pub use nll::{constant_model_nll, fit_constant_model, gamma_density_nll, gamma_nll_partials, gamma_nll_value};
pub use special::{
    digamma, log_gamma, log_gamma_with, reference_errors, reference_values, LanczosCoefficients,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaRegConfig {
    pub input_dim: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    pub eta: f64,
    pub r: f64,
    pub optimizer: OptimizerKind,
    pub optimizer_config: OptimizerConfig,
    pub epochs: usize,
    pub batch_size: usize,
    /// Synthetic observations before the train/test split.
    pub n_samples: usize,
    pub train_fraction: f64,
    pub shape_true: f64,
    pub data_seed: u64,
}

impl Default for GammaRegConfig {
    /// 100 units per layer, `η = 5·10⁻⁴`, `r = 0`, 50 epochs of batches of
    /// 128, λ ÷10 after epoch 25, 70/30 split.
    fn default() -> Self {
        Self {
            input_dim: 4,
            hidden1: 100,
            hidden2: 100,
            eta: 5e-4,
            r: 0.0,
            optimizer: OptimizerKind::EtheoPoula,
            optimizer_config: OptimizerConfig::default().with_lambda(0.01).with_epsilon(1e-2).with_decay(10.0, 25),
            epochs: 50,
            batch_size: 128,
            n_samples: 20_000,
            train_fraction: 0.7,
            shape_true: 2.0,
            data_seed: 0x6a44_a5e7,
        }
    }
}

impl GammaRegConfig {
    pub fn validate(&self) -> Result<()> {
        self.optimizer_config.validate()?;
        if self.input_dim < 2 || self.hidden1 == 0 || self.hidden2 == 0 {
            return Err(Error::config("input_dim", "input_dim ≥ 2 and positive hidden widths required"));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("epochs", "epochs and batch_size must be positive"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) || self.n_samples < 10 {
            return Err(Error::config("train_fraction", "must lie in (0, 1) with at least 10 samples"));
        }
        if !(self.shape_true > 0.0) {
            return Err(Error::config("shape_true", "must be positive"));
        }
        if !(self.eta >= 0.0 && self.r >= 0.0) {
            return Err(Error::config("eta", "eta and r must be nonnegative"));
        }
        Ok(())
    }

    /// Train and test sets drawn from `data_seed`.
    pub fn datasets(&self) -> Result<(GammaDataset, GammaDataset)> {
        let data = synth_gamma_data(
            self.n_samples,
            self.input_dim,
            self.shape_true,
            default_log_mean,
            &mut SeededRng::new(self.data_seed),
        )?;
        Ok(data.split((self.n_samples as f64 * self.train_fraction).round() as usize))
    }
}

/// Network `N(z)` for the log-mean plus the log-dispersion `φ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaModel {
    pub net: DenseNet,
    pub phi: f64,
}

impl GammaModel {
    /// Glorot-initialized network, `φ = 0`.
    pub fn new(input_dim: usize, hidden1: usize, hidden2: usize, rng: &mut SeededRng) -> Self {
        let mut net =
            DenseNet::two_hidden_widths(input_dim, hidden1, hidden2, 1, Activation::LeakyRelu, Activation::Identity);
        net.init_params(rng);
        Self { net, phi: 0.0 }
    }

    /// Network parameters followed by `φ`.
    pub fn n_params(&self) -> usize {
        self.net.n_params() + 1
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.net.params();
        p.push(self.phi);
        p
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        check_dim("gamma model parameters", self.n_params(), flat.len())?;
        let n = self.net.n_params();
        self.net.set_params(&flat[..n]);
        self.phi = flat[n];
        Ok(())
    }

    pub fn log_mean(&self, z: &[f64], tape: &mut Tape) -> f64 {
        self.net.forward_with(z, tape)[0]
    }
}

pub fn gamma_nll(y: f64, z: &[f64], model: &GammaModel) -> Result<f64> {
    check_dim("covariates", model.net.input_dim(), z.len())?;
    gamma_nll_value(y, model.log_mean(z, &mut Tape::new()), model.phi)
}

/// `G` = gradient of the NLL in (θ, φ); `F` = regularizer gradient on θ,
/// zero in the φ slot.
pub fn gamma_nll_gradpair(y: f64, z: &[f64], model: &GammaModel, eta: f64, r: f64) -> Result<GradPair> {
    check_dim("covariates", model.net.input_dim(), z.len())?;
    let mut tape = Tape::new();
    let mut g = vec![0.0; model.n_params()];
    accumulate_gradient(y, z, model, 1.0, &mut g, &mut tape)?;
    Ok(GradPair { g, f: regularizer_part(model, eta, r) })
}

fn regularizer_part(model: &GammaModel, eta: f64, r: f64) -> Vec<f64> {
    let mut f = if eta > 0.0 {
        regularizer_grad(&model.net.params(), eta, r)
    } else {
        vec![0.0; model.net.n_params()]
    };
    f.push(0.0);
    f
}

/// Adds `weight · ∇ℓ` into `g`; returns ℓ.
fn accumulate_gradient(y: f64, z: &[f64], model: &GammaModel, weight: f64, g: &mut [f64], tape: &mut Tape) -> Result<f64> {
    let n = model.net.n_params();
    let m = model.log_mean(z, tape);
    let (d_mean, d_phi) = gamma_nll_partials(y, m, model.phi)?;
    model.net.backward_accumulate(tape, &[weight * d_mean], &mut g[..n], None);
    g[n] += weight * d_phi;
    gamma_nll_value(y, m, model.phi)
}

/// Mean NLL over a dataset.
pub fn mean_nll(data: &GammaDataset, model: &GammaModel) -> Result<f64> {
    let mut tape = Tape::new();
    let mut acc = 0.0;
    for i in 0..data.len() {
        acc += gamma_nll_value(data.y[i], model.log_mean(data.z_row(i), &mut tape), model.phi)?;
    }
    Ok(acc / data.len() as f64)
}

#[derive(Clone, Debug)]
pub struct GammaRun {
    pub record: RunRecord,
    pub model: GammaModel,
}

/// Trains on the configured synthetic data; the record's test score is the
/// held-out mean NLL.
pub fn train_gamma(cfg: &GammaRegConfig, seed: u64) -> Result<GammaRun> {
    cfg.validate()?;
    let (train, test) = cfg.datasets()?;
    let mut rng = SeededRng::new(seed);
    let mut init_rng = rng.split();
    let mut order_rng = rng.split();
    let mut noise_rng = rng.split();
    let mut model = GammaModel::new(cfg.input_dim, cfg.hidden1, cfg.hidden2, &mut init_rng);

    let mut record = RunRecord::new("gamma_reg", cfg.optimizer.tag(), seed, serde_json::to_value(cfg)?);
    let (c, phi) = fit_constant_model(&train.y)?;
    record.extra("n_params", model.n_params() as f64);
    record.extra("constant_log_mean", c);
    record.extra("constant_phi", phi);
    record.extra("constant_test_nll", constant_model_nll(&test.y, c, phi)?);

    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.optimizer_config, model.n_params())?;
    let mut theta = model.params();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut tape = Tape::new();
    let mut elapsed = 0.0;
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        for i in (1..order.len()).rev() {
            order.swap(i, order_rng.below(i + 1));
        }
        let mut loss_sum = 0.0;
        for (it, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let w = 1.0 / chunk.len() as f64;
            let mut g = vec![0.0; theta.len()];
            for &i in chunk {
                loss_sum += accumulate_gradient(train.y[i], train.z_row(i), &model, w, &mut g, &mut tape)?;
            }
            let grad = GradPair { g, f: regularizer_part(&model, cfg.eta, cfg.r) };
            if !grad.is_finite() {
                return Err(Error::NumericalFailure(format!("non-finite gradient at epoch {}, iteration {it}", epoch + 1)));
            }
            optimizer.step(&mut theta, &grad, epoch, &mut noise_rng);
            if theta.iter().any(|t| !t.is_finite()) {
                return Err(Error::NumericalFailure(format!("non-finite parameters at epoch {}, iteration {it}", epoch + 1)));
            }
            model.set_params(&theta)?;
        }
        elapsed += start.elapsed().as_secs_f64() * 1e3;
        let reg = if cfg.eta > 0.0 { regularizer_value(&theta[..theta.len() - 1], cfg.eta, cfg.r) } else { 0.0 };
        let test_nll = mean_nll(&test, &model)?;
        if !test_nll.is_finite() {
            return Err(Error::NumericalFailure(format!("non-finite test NLL at epoch {}", epoch + 1)));
        }
        record.push(EpochRow {
            epoch: epoch + 1,
            train_loss: loss_sum / train.len() as f64 + reg,
            test_score: test_nll,
            wall_ms: elapsed,
        })?;
    }
    record.finish(elapsed);
    Ok(GammaRun { record, model })
}
