use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::market::{BsMarket, InitialWealth};
use super::policy::{
    action_map_into, block_forward, evaluate_score, loss_and_grad, PolicyStack, StateInput, Workspace,
};
use super::train::{Trainer, DEFAULT_TEST_SEED};
use crate::error::{check_dim, Error, Result};
use crate::harness::{EpochRow, RunRecord};
use crate::neuralnet::{DenseNet, Tape};
use crate::optimizers::{Optimizer, OptimizerConfig, OptimizerKind};
use crate::SeededRng;

/// How the continuation value after the first step is obtained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum TransferMode {
    /// Tabulate `w ↦ E[(W_K − γ/2)² | W_0 = w]` under the frozen policies on
    /// a wealth grid with common random numbers, interpolated by a natural
    /// cubic spline.
    Table {
        grid_lo: f64,
        grid_hi: f64,
        grid_points: usize,
        paths: usize,
    },
    /// Roll every training path through the frozen policies and backprop
    /// through them.
    Rollout,
}

impl Default for TransferMode {
    fn default() -> Self {
        TransferMode::Table {
            grid_lo: 0.3,
            grid_hi: 1.9,
            grid_points: 81,
            paths: 10_000,
        }
    }
}

/// Training of one random-feature network for the first decision in front
/// of `K` frozen policies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferConfig {
    /// Market of the frozen stack (horizon `K`); the transfer problem has
    /// horizon `K + 1`.
    pub market: BsMarket,
    pub hidden: usize,
    pub optimizer: OptimizerKind,
    pub optimizer_config: OptimizerConfig,
    pub epochs: usize,
    pub n_train: usize,
    pub batch_size: usize,
    pub n_test: usize,
    pub test_seed: u64,
    pub initial_wealth: InitialWealth,
    pub eta: f64,
    pub r: f64,
    pub mode: TransferMode,
}

impl TransferConfig {
    pub fn black_scholes(assets: usize, hidden: usize) -> Result<Self> {
        Ok(Self {
            market: BsMarket::by_assets(assets)?,
            hidden,
            optimizer: OptimizerKind::EtheoPoula,
            optimizer_config: OptimizerConfig::default().with_lambda(0.05).with_epsilon(1e-2).with_r(1.0).with_decay(10.0, 50),
            epochs: 200,
            n_train: 20_000,
            batch_size: 128,
            n_test: 50_000,
            test_seed: DEFAULT_TEST_SEED,
            initial_wealth: InitialWealth::Uniform { lo: 0.99, hi: 1.01 },
            eta: 1e-6,
            r: 1.0,
            mode: TransferMode::default(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.market.validate()?;
        self.optimizer_config.validate()?;
        if self.hidden == 0 || self.epochs == 0 || self.n_train == 0 || self.batch_size == 0 || self.n_test < 2 {
            return Err(Error::config("transfer", "hidden, epochs, n_train, batch_size must be positive and n_test ≥ 2"));
        }
        if !(self.eta >= 0.0 && self.r >= 0.0) {
            return Err(Error::config("eta", "eta and r must be nonnegative"));
        }
        if let TransferMode::Table { grid_lo, grid_hi, grid_points, paths } = self.mode {
            if !(grid_hi > grid_lo) || grid_points < 4 || paths == 0 {
                return Err(Error::config("mode", "table needs grid_lo < grid_hi, ≥ 4 points and ≥ 1 path"));
            }
        }
        Ok(())
    }

    /// Test paths of horizon `K + 1`.
    pub fn test_market(&self) -> BsMarket {
        self.market.clone().with_horizon(self.market.horizon + 1)
    }
}

/// Natural cubic spline through `(x_i, y_i)` on a uniform grid with linear
/// extension outside it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    pub lo: f64,
    pub step: f64,
    pub values: Vec<f64>,
    second: Vec<f64>,
}

impl ValueTable {
    pub fn from_values(lo: f64, step: f64, values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        if n < 4 || !(step > 0.0) {
            return Err(Error::invalid("value table", "need ≥ 4 points and a positive step"));
        }
        // Tridiagonal system for interior second derivatives (uniform grid).
        let m = n - 2;
        let mut diag = vec![4.0; m];
        let mut rhs: Vec<f64> = (1..n - 1)
            .map(|i| 6.0 * (values[i + 1] - 2.0 * values[i] + values[i - 1]) / (step * step))
            .collect();
        for i in 1..m {
            let w = 1.0 / diag[i - 1];
            diag[i] -= w;
            rhs[i] -= w * rhs[i - 1];
        }
        let mut second = vec![0.0; n];
        for i in (0..m).rev() {
            let next = if i + 1 < m { second[i + 2] } else { 0.0 };
            second[i + 1] = (rhs[i] - next) / diag[i];
        }
        Ok(Self { lo, step, values, second })
    }

    pub fn hi(&self) -> f64 {
        self.lo + self.step * (self.values.len() - 1) as f64
    }

    /// Value and derivative at `w`.
    pub fn eval(&self, w: f64) -> (f64, f64) {
        let n = self.values.len();
        let h = self.step;
        let slope = |i: usize, t: f64| {
            // derivative inside interval i at local coordinate t ∈ [0, 1]
            let (y0, y1, m0, m1) = (self.values[i], self.values[i + 1], self.second[i], self.second[i + 1]);
            (y1 - y0) / h - (3.0 * (1.0 - t).powi(2) - 1.0) * h * m0 / 6.0 + (3.0 * t * t - 1.0) * h * m1 / 6.0
        };
        if w <= self.lo {
            let d = slope(0, 0.0);
            return (self.values[0] + d * (w - self.lo), d);
        }
        if w >= self.hi() {
            let d = slope(n - 2, 1.0);
            return (self.values[n - 1] + d * (w - self.hi()), d);
        }
        let x = (w - self.lo) / h;
        let i = (x.floor() as usize).min(n - 2);
        let t = x - i as f64;
        let (y0, y1, m0, m1) = (self.values[i], self.values[i + 1], self.second[i], self.second[i + 1]);
        let a = 1.0 - t;
        let v = a * y0 + t * y1 + ((a * a * a - a) * m0 + (t * t * t - t) * m1) * h * h / 6.0;
        (v, slope(i, t))
    }
}

/// Tabulates the frozen stack's value function on a wealth grid; every grid
/// point sees the same return paths.
pub fn tabulate_value(frozen: &PolicyStack, market: &BsMarket, lo: f64, hi: f64, points: usize, paths: usize, seed: u64) -> Result<ValueTable> {
    let mut batch = market.sample(paths, InitialWealth::Fixed(1.0), &mut SeededRng::new(seed));
    let step = (hi - lo) / (points - 1) as f64;
    let target = 0.5 * frozen.gamma;
    let mut ws = Workspace::new();
    let values = (0..points)
        .map(|j| {
            batch.w0.fill(lo + step * j as f64);
            let mut total = 0.0;
            for b in (0..paths).step_by(512) {
                let terminal = block_forward(frozen, &batch, b..(b + 512).min(paths), &mut ws);
                total += terminal.iter().map(|w| (w - target).powi(2)).sum::<f64>();
            }
            total / paths as f64
        })
        .collect();
    ValueTable::from_values(lo, step, values)
}

/// Bitwise fingerprint of every weight and bias in the stack.
pub fn stack_fingerprint(stack: &PolicyStack) -> Vec<u64> {
    stack
        .nets
        .iter()
        .flat_map(|n| n.layers.iter())
        .flat_map(|l| l.weight.iter().chain(&l.bias))
        .map(|v| v.to_bits())
        .collect()
}

#[derive(Clone, Debug)]
pub struct TransferRun {
    pub record: RunRecord,
    pub first: DenseNet,
    /// The first network followed by the frozen policies.
    pub combined: PolicyStack,
    pub table: Option<ValueTable>,
}

/// Input of the first network: `W₀ − 1`.
fn first_input(w0: f64) -> [f64; 1] {
    [w0 - 1.0]
}

pub fn train_transfer(cfg: &TransferConfig, frozen: &PolicyStack, seed: u64) -> Result<TransferRun> {
    cfg.validate()?;
    if frozen.has_trainable() {
        return Err(Error::invalid("frozen", "the continuation stack still has trainable layers"));
    }
    if frozen.state != StateInput::Wealth {
        return Err(Error::invalid("frozen", "transfer expects wealth-only policies"));
    }
    check_dim("frozen horizon", cfg.market.horizon, frozen.horizon())?;
    check_dim("frozen assets", cfg.market.assets, frozen.assets())?;
    let fingerprint = stack_fingerprint(frozen);
    let p = cfg.market.assets;

    let mut rng = SeededRng::new(seed);
    let mut init_rng = rng.split();
    let mut data_rng = rng.split();
    let mut noise_rng = rng.split();
    let table_seed = rng.split().seed();
    let mut first = DenseNet::random_feature(1, cfg.hidden, p);
    first.init_params(&mut init_rng);
    let mut nets = Vec::with_capacity(frozen.horizon() + 1);
    nets.push(first.clone());
    nets.extend(frozen.nets.iter().cloned());
    let mut combined = PolicyStack::new(nets, frozen.bounds.clone(), frozen.gamma, frozen.risk_free, StateInput::Wealth)?;

    let test_market = cfg.test_market();
    let test = test_market.sample(cfg.n_test, cfg.initial_wealth, &mut SeededRng::new(cfg.test_seed));
    let mut record = RunRecord::new("transfer", cfg.optimizer.tag(), seed, serde_json::to_value(cfg)?);
    record.extra("n_params", first.n_params() as f64);

    let mut trainer = Trainer {
        optimizer: Optimizer::new(cfg.optimizer, cfg.optimizer_config, first.n_params())?,
        theta: first.params(),
        eta: cfg.eta,
        r: cfg.r,
    };

    let start = Instant::now();
    let table = match cfg.mode {
        TransferMode::Table { grid_lo, grid_hi, grid_points, paths } => {
            Some(tabulate_value(frozen, &cfg.market, grid_lo, grid_hi, grid_points, paths, table_seed)?)
        }
        TransferMode::Rollout => None,
    };
    let mut elapsed = start.elapsed().as_secs_f64() * 1e3;
    record.extra("table_ms", elapsed);

    let mut ws = Workspace::new();
    let mut tape = Tape::new();
    let mut action = vec![0.0; p];
    let mut upstream = vec![0.0; p];
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let mut loss_sum = 0.0;
        let mut n_batches = 0;
        match &table {
            Some(table) => {
                let data = cfg.market.clone().with_horizon(1).sample(cfg.n_train, cfg.initial_wealth, &mut data_rng);
                for (it, lo) in (0..cfg.n_train).step_by(cfg.batch_size).enumerate() {
                    let hi = (lo + cfg.batch_size).min(cfg.n_train);
                    let n = (hi - lo) as f64;
                    let mut g = vec![0.0; first.n_params()];
                    let mut loss = 0.0;
                    for i in lo..hi {
                        let w0 = data.w0[i];
                        let r0 = data.return_at(i, 0);
                        let raw = first.forward_with(&first_input(w0), &mut tape);
                        action_map_into(raw, &frozen.bounds, &mut action);
                        let w1 = w0 * (action.iter().zip(r0).map(|(a, x)| a * x).sum::<f64>() + frozen.risk_free);
                        let (v, dv) = table.eval(w1);
                        loss += v;
                        for j in 0..p {
                            upstream[j] = dv * w0 * r0[j] * frozen.bounds.half_width(j) / n;
                        }
                        first.backward_accumulate(&mut tape, &upstream, &mut g, None);
                    }
                    loss_sum += loss / n + trainer.regularizer();
                    n_batches += 1;
                    trainer.step(g, epoch, it, &mut noise_rng)?;
                    first.set_params(&trainer.theta);
                }
            }
            None => {
                let data = test_market.sample(cfg.n_train, cfg.initial_wealth, &mut data_rng);
                for (it, lo) in (0..cfg.n_train).step_by(cfg.batch_size).enumerate() {
                    let batch = data.slice(lo..(lo + cfg.batch_size).min(cfg.n_train));
                    combined.nets[0] = first.clone();
                    let (loss, g) = loss_and_grad(&combined, &batch, &mut ws)?;
                    loss_sum += loss + trainer.regularizer();
                    n_batches += 1;
                    trainer.step(g, epoch, it, &mut noise_rng)?;
                    first.set_params(&trainer.theta);
                }
            }
        }
        elapsed += start.elapsed().as_secs_f64() * 1e3;
        combined.nets[0] = first.clone();
        if stack_fingerprint(&PolicyStack { nets: combined.nets[1..].to_vec(), ..combined.clone() }) != fingerprint {
            return Err(Error::NumericalFailure(format!("frozen policies changed during epoch {}", epoch + 1)));
        }
        let score = evaluate_score(&combined, &test)?;
        record.push(EpochRow {
            epoch: epoch + 1,
            train_loss: loss_sum / n_batches as f64,
            test_score: score.mean,
            wall_ms: elapsed,
        })?;
    }
    record.finish(elapsed);
    Ok(TransferRun { record, first, combined, table })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::gradcheck::{central_difference, max_relative_error};
    use crate::neuralnet::Activation;
    use crate::portfolio::policy::ActionBounds;

    fn toy_frozen(seed: u64, horizon: usize) -> PolicyStack {
        let m = BsMarket::five_assets();
        let mut s = PolicyStack::two_hidden(
            horizon,
            1,
            Activation::Sigmoid,
            ActionBounds::uniform(5, 0.0, 1.5),
            m.gamma,
            m.risk_free(),
            StateInput::Wealth,
            &mut SeededRng::new(seed),
        )
        .unwrap();
        s.freeze();
        s
    }

    fn toy_cfg(mode: TransferMode) -> TransferConfig {
        let mut cfg = TransferConfig::black_scholes(5, 1).unwrap();
        cfg.market = cfg.market.with_horizon(3);
        cfg.epochs = 3;
        cfg.n_train = 1_000;
        cfg.n_test = 2_000;
        cfg.mode = mode;
        cfg
    }

    #[test]
    fn spline_reproduces_cubics_and_extends_linearly() {
        // natural spline is exact for linear data
        let t = ValueTable::from_values(0.0, 0.5, (0..9).map(|i| 1.0 + 2.0 * 0.5 * i as f64).collect()).unwrap();
        let (v, d) = t.eval(1.3);
        assert!((v - 3.6).abs() < 1e-13 && (d - 2.0).abs() < 1e-13);
        let (v, d) = t.eval(10.0);
        assert!((v - 21.0).abs() < 1e-12 && (d - 2.0).abs() < 1e-12);
        // smooth data: value and slope track the function
        let f = |x: f64| (x - 0.7).powi(2);
        let t = ValueTable::from_values(0.0, 0.02, (0..101).map(|i| f(0.02 * i as f64)).collect()).unwrap();
        let (v, d) = t.eval(0.913);
        assert!((v - f(0.913)).abs() < 1e-8);
        assert!((d - 2.0 * (0.913 - 0.7)).abs() < 1e-6);
        let num = central_difference(|x| t.eval(x[0]).0, &[1.234], 1e-6)[0];
        assert!((t.eval(1.234).1 - num).abs() < 1e-6);
    }

    #[test]
    fn refuses_trainable_continuation() {
        let mut frozen = toy_frozen(1, 3);
        frozen.nets[1].set_trainable(0, true, true);
        assert!(train_transfer(&toy_cfg(TransferMode::Rollout), &frozen, 1).is_err());
    }

    #[test]
    fn parameter_count() {
        for (p, nu) in [(5, 1), (5, 5), (50, 20)] {
            assert_eq!(DenseNet::random_feature(1, nu, p).n_params(), nu * (p + 1));
        }
        let full = 41 * (1 * (1 + 1 + 5 + 2) + 5);
        assert_eq!(full, 574);
    }

    #[test]
    fn both_modes_train_and_keep_frozen_intact() {
        let frozen = toy_frozen(2, 3);
        let before = frozen.clone();
        for mode in [TransferMode::Rollout, TransferMode::Table { grid_lo: 0.3, grid_hi: 1.9, grid_points: 41, paths: 500 }] {
            let run = train_transfer(&toy_cfg(mode), &frozen, 4).unwrap();
            assert_eq!(run.record.rows.len(), 3);
            assert_eq!(run.record.extras["n_params"], 6.0);
            assert_eq!(stack_fingerprint(&PolicyStack { nets: run.combined.nets[1..].to_vec(), ..run.combined.clone() }), stack_fingerprint(&before));
        }
        let a = train_transfer(&toy_cfg(TransferMode::Rollout), &frozen, 9).unwrap();
        let b = train_transfer(&toy_cfg(TransferMode::Rollout), &frozen, 9).unwrap();
        assert_eq!(a.first, b.first);
    }

    #[test]
    fn rollout_gradient_reaches_only_the_first_network() {
        let frozen = toy_frozen(3, 3);
        let cfg = toy_cfg(TransferMode::Rollout);
        for seed in 0..5 {
            let mut first = DenseNet::random_feature(1, 2, 5);
            first.init_params(&mut SeededRng::new(seed));
            // move the bias off zero so both relu branches are exercised
            let mut theta = first.params();
            theta[0] = 0.3;
            theta[1] = -0.2;
            first.set_params(&theta);
            let mut nets = vec![first];
            nets.extend(frozen.nets.iter().cloned());
            let stack = PolicyStack::new(nets, frozen.bounds.clone(), frozen.gamma, frozen.risk_free, StateInput::Wealth).unwrap();
            let batch = cfg.test_market().sample(16, cfg.initial_wealth, &mut SeededRng::new(50 + seed));
            let (_, grad) = loss_and_grad(&stack, &batch, &mut Workspace::new()).unwrap();
            assert_eq!(grad.len(), 2 * 6);
            let mut probe = stack.clone();
            let numeric = central_difference(
                |t| {
                    probe.set_params(t).unwrap();
                    loss_and_grad(&probe, &batch, &mut Workspace::new()).unwrap().0
                },
                &stack.params(),
                1e-5,
            );
            let err = max_relative_error(&grad, &numeric);
            assert!(err < 1e-5, "seed {seed}: {err}");
        }
    }
}
