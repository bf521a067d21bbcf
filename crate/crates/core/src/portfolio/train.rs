use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::market::{Ar1Market, BsMarket, EpisodeBatch, InitialWealth};
use super::policy::{evaluate_score, loss_and_grad, ActionBounds, PolicyStack, StateInput, Workspace};
use crate::error::{Error, Result};
use crate::harness::{EpochRow, RunRecord};
use crate::neuralnet::Activation;
use crate::objectives::{regularizer_grad, regularizer_value};
use crate::optimizers::{GradPair, Optimizer, OptimizerConfig, OptimizerKind};
use crate::SeededRng;

/// Return model driving the wealth recursion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "model")]
pub enum MarketSpec {
    BlackScholes(BsMarket),
    Ar1(Ar1Market),
}

impl MarketSpec {
    pub fn horizon(&self) -> usize {
        match self {
            MarketSpec::BlackScholes(m) => m.horizon,
            MarketSpec::Ar1(m) => m.horizon,
        }
    }

    pub fn assets(&self) -> usize {
        match self {
            MarketSpec::BlackScholes(m) => m.assets,
            MarketSpec::Ar1(m) => m.assets,
        }
    }

    pub fn risk_free(&self) -> f64 {
        match self {
            MarketSpec::BlackScholes(m) => m.risk_free(),
            MarketSpec::Ar1(m) => m.risk_free,
        }
    }

    pub fn gamma(&self) -> f64 {
        match self {
            MarketSpec::BlackScholes(m) => m.gamma,
            MarketSpec::Ar1(m) => m.gamma,
        }
    }

    pub fn bounds(&self) -> ActionBounds {
        let (p, lo, hi) = match self {
            MarketSpec::BlackScholes(m) => (m.assets, m.action_lo, m.action_hi),
            MarketSpec::Ar1(m) => (m.assets, m.action_lo, m.action_hi),
        };
        ActionBounds::uniform(p, lo, hi)
    }

    pub fn state_input(&self) -> StateInput {
        match self {
            MarketSpec::BlackScholes(_) => StateInput::Wealth,
            MarketSpec::Ar1(_) => StateInput::WealthAndLag,
        }
    }

    pub fn with_horizon(&self, horizon: usize) -> Self {
        match self {
            MarketSpec::BlackScholes(m) => MarketSpec::BlackScholes(m.clone().with_horizon(horizon)),
            MarketSpec::Ar1(m) => MarketSpec::Ar1(m.clone().with_horizon(horizon)),
        }
    }

    pub fn sample(&self, n: usize, w0: InitialWealth, rng: &mut SeededRng) -> EpisodeBatch {
        match self {
            MarketSpec::BlackScholes(m) => m.sample(n, w0, rng),
            MarketSpec::Ar1(m) => m.sample(n, w0, rng),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MarketSpec::BlackScholes(m) => m.validate(),
            MarketSpec::Ar1(m) => m.clone().refresh().map(|_| ()),
        }
    }
}

/// Joint training of one policy network per rebalancing date.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FullTrainingConfig {
    pub market: MarketSpec,
    /// Hidden width ν.
    pub hidden: usize,
    pub activation: Activation,
    pub optimizer: OptimizerKind,
    pub optimizer_config: OptimizerConfig,
    pub epochs: usize,
    pub n_train: usize,
    pub batch_size: usize,
    pub n_test: usize,
    pub test_seed: u64,
    pub initial_wealth: InitialWealth,
    /// Regularizer `η|θ|^{2(r+1)}/(2(r+1))`; off by default.
    pub eta: f64,
    pub r: f64,
}

pub const DEFAULT_TEST_SEED: u64 = 0x5eed_7e57;

impl FullTrainingConfig {
    /// Black–Scholes preset, ReLU networks, 200 epochs of 20000 fresh paths
    /// in batches of 128, scored on 50000 paths; λ decays ÷10 at epoch 50.
    pub fn black_scholes(assets: usize, hidden: usize) -> Result<Self> {
        Ok(Self {
            market: MarketSpec::BlackScholes(BsMarket::by_assets(assets)?),
            hidden,
            activation: Activation::Relu,
            optimizer: OptimizerKind::EtheoPoula,
            optimizer_config: OptimizerConfig::default().with_lambda(0.05).with_epsilon(1e-2).with_decay(10.0, 50),
            epochs: 200,
            n_train: 20_000,
            batch_size: 128,
            n_test: 50_000,
            test_seed: DEFAULT_TEST_SEED,
            initial_wealth: InitialWealth::Fixed(1.0),
            eta: 0.0,
            r: 0.0,
        })
    }

    /// AR(1) preset with 40000 paths per epoch.
    pub fn ar1(hidden: usize) -> Self {
        Self {
            market: MarketSpec::Ar1(Ar1Market::thirty_assets()),
            n_train: 40_000,
            ..Self::black_scholes(5, hidden).expect("preset")
        }
    }

    pub fn with_optimizer(mut self, kind: OptimizerKind, config: OptimizerConfig) -> Self {
        self.optimizer = kind;
        self.optimizer_config = config;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.market.validate()?;
        self.optimizer_config.validate()?;
        if self.hidden == 0 {
            return Err(Error::config("hidden", "must be positive"));
        }
        if self.epochs == 0 || self.n_train == 0 || self.batch_size == 0 || self.n_test < 2 {
            return Err(Error::config("epochs", "epochs, n_train, batch_size must be positive and n_test ≥ 2"));
        }
        if !(self.eta >= 0.0 && self.r >= 0.0) {
            return Err(Error::config("eta", "eta and r must be nonnegative"));
        }
        Ok(())
    }

    pub fn test_batch(&self) -> EpisodeBatch {
        self.market.sample(self.n_test, self.initial_wealth, &mut SeededRng::new(self.test_seed))
    }

    /// `E[(W₀R_f^K − γ/2)²]`, the score of holding cash only.
    pub fn cash_ceiling(&self) -> f64 {
        let growth = self.market.risk_free().powi(self.market.horizon() as i32);
        let w = &self.initial_wealth;
        (growth * w.mean() - 0.5 * self.market.gamma()).powi(2) + growth * growth * w.variance()
    }
}

/// A finished run: its record and the trained policies.
#[derive(Clone, Debug)]
pub struct PortfolioRun {
    pub record: RunRecord,
    pub stack: PolicyStack,
}

/// Minibatch iteration over a stack with the shared optimizer loop. `loss`
/// returns the mean batch loss and fills the data gradient.
pub(crate) struct Trainer {
    pub optimizer: Optimizer,
    pub theta: Vec<f64>,
    pub eta: f64,
    pub r: f64,
}

impl Trainer {
    pub fn step(&mut self, g: Vec<f64>, epoch: usize, iteration: usize, rng: &mut SeededRng) -> Result<()> {
        let f = if self.eta > 0.0 {
            regularizer_grad(&self.theta, self.eta, self.r)
        } else {
            vec![0.0; self.theta.len()]
        };
        let grad = GradPair { g, f };
        if !grad.is_finite() {
            return Err(Error::NumericalFailure(format!("non-finite gradient at epoch {epoch}, iteration {iteration}")));
        }
        self.optimizer.step(&mut self.theta, &grad, epoch, rng);
        if self.theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::NumericalFailure(format!("non-finite parameters after epoch {epoch}, iteration {iteration}")));
        }
        Ok(())
    }

    pub fn regularizer(&self) -> f64 {
        if self.eta > 0.0 {
            regularizer_value(&self.theta, self.eta, self.r)
        } else {
            0.0
        }
    }
}

pub fn train_full(cfg: &FullTrainingConfig, seed: u64) -> Result<PortfolioRun> {
    cfg.validate()?;
    let market = &cfg.market;
    let mut rng = SeededRng::new(seed);
    let mut init_rng = rng.split();
    let mut data_rng = rng.split();
    let mut noise_rng = rng.split();
    let mut stack = PolicyStack::two_hidden(
        market.horizon(),
        cfg.hidden,
        cfg.activation,
        market.bounds(),
        market.gamma(),
        market.risk_free(),
        market.state_input(),
        &mut init_rng,
    )?;
    let test = cfg.test_batch();
    let mut record = RunRecord::new(
        "portfolio",
        cfg.optimizer.tag(),
        seed,
        serde_json::to_value(cfg)?,
    );
    record.extra("n_params", stack.n_params() as f64);
    record.extra("cash_ceiling", cfg.cash_ceiling());
    log::info!(
        "full training: {} networks, {} parameters, cash ceiling {:.4}",
        stack.horizon(),
        stack.n_params(),
        cfg.cash_ceiling()
    );

    let mut trainer = Trainer {
        optimizer: Optimizer::new(cfg.optimizer, cfg.optimizer_config, stack.n_params())?,
        theta: stack.params(),
        eta: cfg.eta,
        r: cfg.r,
    };
    let mut ws = Workspace::new();
    let mut elapsed = 0.0;
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let data = market.sample(cfg.n_train, cfg.initial_wealth, &mut data_rng);
        let mut loss_sum = 0.0;
        let mut n_batches = 0;
        for (it, lo) in (0..cfg.n_train).step_by(cfg.batch_size).enumerate() {
            let batch = data.slice(lo..(lo + cfg.batch_size).min(cfg.n_train));
            let (loss, g) = loss_and_grad(&stack, &batch, &mut ws)?;
            loss_sum += loss + trainer.regularizer();
            n_batches += 1;
            trainer.step(g, epoch, it, &mut noise_rng)?;
            stack.set_params(&trainer.theta)?;
        }
        elapsed += start.elapsed().as_secs_f64() * 1e3;
        let score = evaluate_score(&stack, &test)?;
        record.push(EpochRow {
            epoch: epoch + 1,
            train_loss: loss_sum / n_batches as f64,
            test_score: score.mean,
            wall_ms: elapsed,
        })?;
        log::debug!("epoch {} test score {:.5}", epoch + 1, score.mean);
    }
    record.finish(elapsed);
    Ok(PortfolioRun { record, stack })
}
