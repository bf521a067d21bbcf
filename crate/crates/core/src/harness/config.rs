use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::gamma_regression::GammaRegConfig;
use crate::neuralnet::Activation;
use crate::objectives::{CvarSpec, ObjectiveTrainConfig, QuantileSpec, ReluRegressionSpec, ScalarDist, VectorQuantizationSpec};
use crate::optimizers::{OptimizerConfig, OptimizerKind};
use crate::portfolio::{FullTrainingConfig, InitialWealth, TransferConfig, TransferMode, DEFAULT_TEST_SEED};
use crate::theory::{ExcessRiskConfig, W1Config};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Quantile,
    Vq,
    Cvar,
    ReluReg,
    PortfolioBs,
    PortfolioAr1,
    Transfer,
    GammaReg,
    W1Scaling,
    ExcessRisk,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 10] = [
        ExperimentKind::Quantile,
        ExperimentKind::Vq,
        ExperimentKind::Cvar,
        ExperimentKind::ReluReg,
        ExperimentKind::PortfolioBs,
        ExperimentKind::PortfolioAr1,
        ExperimentKind::Transfer,
        ExperimentKind::GammaReg,
        ExperimentKind::W1Scaling,
        ExperimentKind::ExcessRisk,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            ExperimentKind::Quantile => "quantile",
            ExperimentKind::Vq => "vq",
            ExperimentKind::Cvar => "cvar",
            ExperimentKind::ReluReg => "relu_reg",
            ExperimentKind::PortfolioBs => "portfolio_bs",
            ExperimentKind::PortfolioAr1 => "portfolio_ar1",
            ExperimentKind::Transfer => "transfer",
            ExperimentKind::GammaReg => "gamma_reg",
            ExperimentKind::W1Scaling => "w1_scaling",
            ExperimentKind::ExcessRisk => "excess_risk",
        }
    }

    /// Whether runs of this kind are epoch traces (as opposed to tables).
    pub fn is_training(self) -> bool {
        !matches!(self, ExperimentKind::W1Scaling | ExperimentKind::ExcessRisk)
    }
}

/// Axes of a sweep. Empty axes keep the base value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub optimizer: Vec<String>,
    pub lambda: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub beta: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    One(SweepGrid),
    Many(Vec<SweepGrid>),
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::Many(Vec::new())
    }
}

impl GridSpec {
    pub fn blocks(&self) -> Vec<SweepGrid> {
        match self {
            GridSpec::One(g) => vec![g.clone()],
            GridSpec::Many(v) => v.clone(),
        }
    }
}

/// A run or sweep description, read from TOML or JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub optimizer: Option<String>,
    /// Keys override the experiment's default optimizer settings.
    #[serde(default)]
    pub optimizer_config: Option<Map<String, Value>>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub epochs: Option<usize>,
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub n_train: Option<usize>,
    #[serde(default)]
    pub n_test: Option<usize>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub threads: Option<usize>,
    /// Experiment-specific settings.
    #[serde(default)]
    pub params: Map<String, Value>,
    #[serde(default)]
    pub grid: GridSpec,
}

fn default_seeds() -> Vec<u64> {
    vec![1]
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind) -> Self {
        Self {
            experiment,
            optimizer: None,
            optimizer_config: None,
            seeds: default_seeds(),
            epochs: None,
            batch_size: None,
            n_train: None,
            n_test: None,
            output_dir: None,
            threads: None,
            params: Map::new(),
            grid: GridSpec::default(),
        }
    }

    /// Parses JSON when the file ends in `.json`, TOML otherwise.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(field_of(e.message()), e.message().trim().to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(field_of(&e.to_string()), e.to_string()))
    }

    /// Type-checks every field. Nothing is computed.
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "need at least one seed"));
        }
        if self.threads == Some(0) {
            return Err(Error::config("threads", "must be positive"));
        }
        self.resolve()?.validate()?;
        for block in self.grid.blocks() {
            for tag in &block.optimizer {
                parse_optimizer(tag)?;
            }
        }
        for point in self.sweep_points()? {
            point.resolve()?.validate()?;
        }
        Ok(())
    }

    /// The typed job for one point of the configuration.
    pub fn resolve(&self) -> Result<Job> {
        let kind = self.experiment;
        if !kind.is_training() {
            for (field, set) in [
                ("epochs", self.epochs.is_some()),
                ("batch_size", self.batch_size.is_some()),
                ("n_train", self.n_train.is_some()),
                ("n_test", self.n_test.is_some()),
            ] {
                if set {
                    return Err(Error::config(field, format!("not used by `{}`", kind.tag())));
                }
            }
            if self.optimizer.is_some() {
                return Err(Error::config("optimizer", format!("`{}` always runs e-THεO POULA chains", kind.tag())));
            }
        }
        let job = match kind {
            ExperimentKind::Quantile => {
                let p: QuantileParams = params(&self.params)?;
                let spec = QuantileSpec::new(p.q, p.eta, p.r, p.data).map_err(as_param_error)?;
                Job::Quantile(spec, self.objective_train(vec![p.theta0])?)
            }
            ExperimentKind::Vq => {
                let p: VqParams = params(&self.params)?;
                let spec = VectorQuantizationSpec::new(p.n_codes, p.eta, p.r, p.data).map_err(as_param_error)?;
                let theta0 = p.theta0.unwrap_or_else(|| (0..p.n_codes).map(|i| 0.1 * (i + 1) as f64).collect());
                Job::Vq(spec, self.objective_train(theta0)?)
            }
            ExperimentKind::Cvar => {
                let p: CvarParams = params(&self.params)?;
                let n = p.losses.len();
                let spec = CvarSpec::new(p.q, p.eta, p.r, p.losses).map_err(as_param_error)?;
                let theta0 = p.theta0.unwrap_or_else(|| vec![0.0; n + 1]);
                Job::Cvar(spec, self.objective_train(theta0)?)
            }
            ExperimentKind::ReluReg => {
                let p: ReluParams = params(&self.params)?;
                let spec = ReluRegressionSpec {
                    c0: p.c0,
                    eta: p.eta,
                    r: p.r,
                    k1_true: p.k1_true,
                    b0_true: p.b0_true,
                    z_dist: p.z_dist,
                    noise_sd: p.noise_sd,
                };
                spec.validate().map_err(as_param_error)?;
                Job::Relu(spec, self.objective_train(p.theta0.to_vec())?)
            }
            ExperimentKind::PortfolioBs | ExperimentKind::PortfolioAr1 => {
                let p: PortfolioParams = params(&self.params)?;
                let mut cfg = if kind == ExperimentKind::PortfolioBs {
                    FullTrainingConfig::black_scholes(p.assets.unwrap_or(5), p.hidden).map_err(as_param_error)?
                } else {
                    if p.assets.is_some_and(|a| a != 30) {
                        return Err(Error::config("params.assets", "the AR(1) market has 30 assets"));
                    }
                    FullTrainingConfig::ar1(p.hidden)
                };
                if let Some(k) = p.horizon {
                    cfg.market = cfg.market.with_horizon(k);
                }
                cfg.activation = p.activation;
                cfg.initial_wealth = p.initial_wealth;
                cfg.eta = p.eta;
                cfg.r = p.r;
                cfg.test_seed = p.test_seed;
                self.apply_training(&mut cfg.optimizer, &mut cfg.optimizer_config, &mut cfg.epochs, &mut cfg.batch_size, &mut cfg.n_train, &mut cfg.n_test)?;
                Job::Portfolio(Box::new(cfg))
            }
            ExperimentKind::Transfer => {
                let p: TransferParams = params(&self.params)?;
                let mut cfg = TransferConfig::black_scholes(p.assets, p.hidden).map_err(as_param_error)?;
                if let Some(k) = p.horizon {
                    cfg.market = cfg.market.clone().with_horizon(k);
                }
                cfg.mode = p.mode;
                cfg.test_seed = p.test_seed;
                self.apply_training(&mut cfg.optimizer, &mut cfg.optimizer_config, &mut cfg.epochs, &mut cfg.batch_size, &mut cfg.n_train, &mut cfg.n_test)?;
                let mut frozen = FullTrainingConfig::black_scholes(p.assets, p.frozen_hidden.unwrap_or(p.hidden)).map_err(as_param_error)?;
                frozen.market = frozen.market.with_horizon(cfg.market.horizon);
                frozen.activation = p.frozen_activation;
                frozen.test_seed = p.test_seed;
                frozen.epochs = p.frozen_epochs.unwrap_or(cfg.epochs);
                frozen.n_train = cfg.n_train;
                frozen.batch_size = cfg.batch_size;
                frozen.n_test = cfg.n_test;
                Job::Transfer(Box::new(TransferJob {
                    frozen,
                    frozen_stack: p.frozen_stack,
                    transfer: cfg,
                }))
            }
            ExperimentKind::GammaReg => {
                let mut cfg: GammaRegConfig = merge_params(GammaRegConfig::default(), &self.params, &["optimizer", "optimizer_config", "epochs", "batch_size"])?;
                let mut n_train = cfg.n_samples;
                let mut n_test = 0;
                self.apply_training(&mut cfg.optimizer, &mut cfg.optimizer_config, &mut cfg.epochs, &mut cfg.batch_size, &mut n_train, &mut n_test)?;
                if self.n_train.is_some() || self.n_test.is_some() {
                    return Err(Error::config("n_train", "gamma_reg sizes its data with params.n_samples and params.train_fraction"));
                }
                Job::Gamma(cfg)
            }
            ExperimentKind::W1Scaling => {
                let p: TheoryParams<W1Config> = theory_params(&self.params, W1Config::default())?;
                let mut cfg = p.config;
                if let Some(eps) = self.optimizer_override("epsilon")? {
                    cfg.epsilon = eps;
                }
                if let Some(beta) = self.optimizer_override("beta")? {
                    cfg.beta = beta;
                }
                if let Some(l) = self.optimizer_override("lambda")? {
                    cfg.lambdas = vec![l];
                }
                Job::W1(p.objective, cfg)
            }
            ExperimentKind::ExcessRisk => {
                let p: TheoryParams<ExcessRiskConfig> = theory_params(&self.params, ExcessRiskConfig::default())?;
                let mut cfg = p.config;
                if let Some(eps) = self.optimizer_override("epsilon")? {
                    cfg.epsilon = eps;
                }
                if let Some(beta) = self.optimizer_override("beta")? {
                    cfg.beta = beta;
                }
                if let Some(l) = self.optimizer_override("lambda")? {
                    cfg.lambda = l;
                }
                Job::Excess(p.objective, cfg)
            }
        };
        Ok(job)
    }

    fn optimizer_override(&self, key: &str) -> Result<Option<f64>> {
        let Some(map) = &self.optimizer_config else {
            return Ok(None);
        };
        for k in map.keys() {
            if !["lambda", "epsilon", "beta"].contains(&k.as_str()) {
                return Err(Error::config(format!("optimizer_config.{k}"), format!("not used by `{}`", self.experiment.tag())));
            }
        }
        match map.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_f64()
                .map(Some)
                .ok_or_else(|| Error::config(format!("optimizer_config.{key}"), "must be a number")),
        }
    }

    fn objective_train(&self, theta0: Vec<f64>) -> Result<ObjectiveTrainConfig> {
        let mut cfg = ObjectiveTrainConfig::new(theta0);
        self.apply_training(&mut cfg.optimizer, &mut cfg.optimizer_config, &mut cfg.epochs, &mut cfg.batch_size, &mut cfg.n_train, &mut cfg.n_test)?;
        Ok(cfg)
    }

    fn apply_training(
        &self,
        kind: &mut OptimizerKind,
        opt: &mut OptimizerConfig,
        epochs: &mut usize,
        batch_size: &mut usize,
        n_train: &mut usize,
        n_test: &mut usize,
    ) -> Result<()> {
        if let Some(tag) = &self.optimizer {
            *kind = parse_optimizer(tag)?;
        }
        if let Some(map) = &self.optimizer_config {
            *opt = merge_optimizer(*opt, map)?;
        }
        for (slot, value) in [(epochs, self.epochs), (batch_size, self.batch_size), (n_train, self.n_train), (n_test, self.n_test)] {
            if let Some(v) = value {
                *slot = v;
            }
        }
        Ok(())
    }

    /// Configurations of the Cartesian grid blocks, in declaration order.
    /// A config without a grid yields itself.
    pub fn sweep_points(&self) -> Result<Vec<ExperimentConfig>> {
        let blocks = self.grid.blocks();
        if blocks.is_empty() {
            let mut one = self.clone();
            one.grid = GridSpec::default();
            return Ok(vec![one]);
        }
        let mut out = Vec::new();
        for block in blocks {
            let optimizers: Vec<Option<String>> = if block.optimizer.is_empty() {
                vec![self.optimizer.clone()]
            } else {
                block.optimizer.iter().cloned().map(Some).collect()
            };
            let axis = |v: &Vec<f64>| -> Vec<Option<f64>> {
                if v.is_empty() {
                    vec![None]
                } else {
                    v.iter().copied().map(Some).collect()
                }
            };
            for opt in &optimizers {
                for lambda in axis(&block.lambda) {
                    for epsilon in axis(&block.epsilon) {
                        for beta in axis(&block.beta) {
                            let mut point = self.clone();
                            point.grid = GridSpec::default();
                            point.optimizer = opt.clone();
                            let mut map = point.optimizer_config.take().unwrap_or_default();
                            for (k, v) in [("lambda", lambda), ("epsilon", epsilon), ("beta", beta)] {
                                if let Some(v) = v {
                                    map.insert(k.into(), Value::from(v));
                                }
                            }
                            point.optimizer_config = if map.is_empty() { None } else { Some(map) };
                            out.push(point);
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

pub fn parse_optimizer(tag: &str) -> Result<OptimizerKind> {
    tag.parse::<OptimizerKind>()
}

/// A fully typed unit of work.
#[derive(Clone, Debug, PartialEq)]
pub enum Job {
    Quantile(QuantileSpec, ObjectiveTrainConfig),
    Vq(VectorQuantizationSpec, ObjectiveTrainConfig),
    Cvar(CvarSpec, ObjectiveTrainConfig),
    Relu(ReluRegressionSpec, ObjectiveTrainConfig),
    Portfolio(Box<FullTrainingConfig>),
    Transfer(Box<TransferJob>),
    Gamma(GammaRegConfig),
    W1(QuantileSpec, W1Config),
    Excess(QuantileSpec, ExcessRiskConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransferJob {
    /// Training of the `K`-step policies that are then frozen.
    pub frozen: FullTrainingConfig,
    /// Previously saved frozen stack (JSON); skips the frozen training.
    pub frozen_stack: Option<PathBuf>,
    pub transfer: TransferConfig,
}

impl Job {
    pub fn validate(&self) -> Result<()> {
        match self {
            Job::Quantile(_, t) => t.validate(1),
            Job::Vq(s, t) => t.validate(s.n_codes),
            Job::Cvar(s, t) => t.validate(s.n_assets() + 1),
            Job::Relu(_, t) => t.validate(2),
            Job::Portfolio(c) => c.validate(),
            Job::Transfer(t) => {
                t.transfer.validate()?;
                if t.frozen_stack.is_none() {
                    t.frozen.validate()?;
                }
                Ok(())
            }
            Job::Gamma(c) => c.validate(),
            Job::W1(_, c) => c.validate(),
            Job::Excess(_, c) => c.validate(1),
        }
        .map_err(as_param_error)
    }

    /// Serializable echo of the job for run records.
    pub fn echo(&self) -> Value {
        let pair = |a: Value, b: Value| serde_json::json!({ "objective": a, "training": b });
        match self {
            Job::Quantile(s, t) => pair(to_value(s), to_value(t)),
            Job::Vq(s, t) => pair(to_value(s), to_value(t)),
            Job::Cvar(s, t) => pair(to_value(s), to_value(t)),
            Job::Relu(s, t) => pair(to_value(s), to_value(t)),
            Job::Portfolio(c) => to_value(c),
            Job::Transfer(t) => to_value(t),
            Job::Gamma(c) => to_value(c),
            Job::W1(s, c) => pair(to_value(s), to_value(c)),
            Job::Excess(s, c) => pair(to_value(s), to_value(c)),
        }
    }

    pub fn optimizer(&self) -> OptimizerKind {
        match self {
            Job::Quantile(_, t) | Job::Vq(_, t) | Job::Cvar(_, t) | Job::Relu(_, t) => t.optimizer,
            Job::Portfolio(c) => c.optimizer,
            Job::Transfer(t) => t.transfer.optimizer,
            Job::Gamma(c) => c.optimizer,
            Job::W1(..) | Job::Excess(..) => OptimizerKind::EtheoPoula,
        }
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

/// Invalid values inside a config surface as config errors so that the CLI
/// maps them to the config exit code.
fn as_param_error(e: Error) -> Error {
    match e {
        Error::InvalidParameter { name, reason } => Error::config(format!("params.{name}"), reason),
        Error::DimensionMismatch { context, expected, got } => {
            Error::config(context, format!("expected {expected} entries, got {got}"))
        }
        other => other,
    }
}

/// Best-effort extraction of a field name from a serde message such as
/// "unknown field `foo`" or "unknown variant `bar`".
fn field_of(message: &str) -> String {
    message
        .split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "config".to_string())
}

fn params<T: DeserializeOwned>(map: &Map<String, Value>) -> Result<T> {
    serde_json::from_value(Value::Object(map.clone())).map_err(|e| {
        let msg = e.to_string();
        Error::config(format!("params.{}", field_of(&msg)), msg)
    })
}

/// Overlays `map` on the serialized `base`, rejecting unknown and reserved
/// keys.
fn merge_params<T: Serialize + DeserializeOwned>(base: T, map: &Map<String, Value>, reserved: &[&str]) -> Result<T> {
    let mut v = serde_json::to_value(&base)?;
    let obj = v.as_object_mut().expect("struct serializes to an object");
    for (k, val) in map {
        if reserved.contains(&k.as_str()) {
            return Err(Error::config(format!("params.{k}"), "set this at the top level of the config"));
        }
        if !obj.contains_key(k) {
            return Err(Error::config(format!("params.{k}"), "unknown field"));
        }
        obj.insert(k.clone(), val.clone());
    }
    serde_json::from_value(v).map_err(|e| Error::config("params", e.to_string()))
}

fn merge_optimizer(base: OptimizerConfig, map: &Map<String, Value>) -> Result<OptimizerConfig> {
    let mut v = serde_json::to_value(base)?;
    let obj = v.as_object_mut().expect("struct serializes to an object");
    for (k, val) in map {
        if !obj.contains_key(k) {
            return Err(Error::config(format!("optimizer_config.{k}"), "unknown field"));
        }
        obj.insert(k.clone(), val.clone());
    }
    let cfg: OptimizerConfig = serde_json::from_value(v).map_err(|e| Error::config("optimizer_config", e.to_string()))?;
    cfg.validate().map_err(|e| match e {
        Error::InvalidParameter { name, reason } => Error::config(format!("optimizer_config.{name}"), reason),
        other => other,
    })?;
    Ok(cfg)
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct QuantileParams {
    q: f64,
    eta: f64,
    r: f64,
    data: ScalarDist,
    theta0: f64,
}

impl Default for QuantileParams {
    fn default() -> Self {
        Self {
            q: 0.5,
            eta: 0.0,
            r: 0.0,
            data: ScalarDist::UNIT_UNIFORM,
            theta0: 0.0,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct VqParams {
    n_codes: usize,
    eta: f64,
    r: f64,
    data: ScalarDist,
    theta0: Option<Vec<f64>>,
}

impl Default for VqParams {
    fn default() -> Self {
        Self {
            n_codes: 2,
            eta: 0.0,
            r: 0.0,
            data: ScalarDist::UNIT_UNIFORM,
            theta0: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CvarParams {
    q: f64,
    eta: f64,
    r: f64,
    losses: Vec<ScalarDist>,
    theta0: Option<Vec<f64>>,
}

impl Default for CvarParams {
    fn default() -> Self {
        Self {
            q: 0.95,
            eta: 1e-4,
            r: 0.0,
            losses: vec![ScalarDist::STANDARD_NORMAL],
            theta0: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ReluParams {
    c0: f64,
    eta: f64,
    r: f64,
    k1_true: f64,
    b0_true: f64,
    z_dist: ScalarDist,
    noise_sd: f64,
    theta0: [f64; 2],
}

impl Default for ReluParams {
    fn default() -> Self {
        Self {
            c0: 1.0,
            eta: 1e-4,
            r: 0.5,
            k1_true: 2.0,
            b0_true: 0.5,
            z_dist: ScalarDist::Uniform { lo: -1.0, hi: 1.0 },
            noise_sd: 0.1,
            theta0: [1.0, 0.0],
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PortfolioParams {
    assets: Option<usize>,
    hidden: usize,
    horizon: Option<usize>,
    activation: Activation,
    initial_wealth: InitialWealth,
    eta: f64,
    r: f64,
    test_seed: u64,
}

impl Default for PortfolioParams {
    fn default() -> Self {
        Self {
            assets: None,
            hidden: 1,
            horizon: None,
            activation: Activation::Relu,
            initial_wealth: InitialWealth::Fixed(1.0),
            eta: 0.0,
            r: 0.0,
            test_seed: DEFAULT_TEST_SEED,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TransferParams {
    assets: usize,
    hidden: usize,
    /// Horizon `K` of the frozen stack.
    horizon: Option<usize>,
    mode: TransferMode,
    test_seed: u64,
    frozen_hidden: Option<usize>,
    frozen_activation: Activation,
    frozen_epochs: Option<usize>,
    frozen_stack: Option<PathBuf>,
}

impl Default for TransferParams {
    fn default() -> Self {
        Self {
            assets: 5,
            hidden: 1,
            horizon: None,
            mode: TransferMode::default(),
            test_seed: DEFAULT_TEST_SEED,
            frozen_hidden: None,
            frozen_activation: Activation::Sigmoid,
            frozen_epochs: None,
            frozen_stack: None,
        }
    }
}

/// Theory experiments take the quantile objective keys (`q`, `eta`, `r`,
/// `data`) next to their own settings.
struct TheoryParams<C> {
    objective: QuantileSpec,
    config: C,
}

fn theory_params<C: Serialize + DeserializeOwned>(map: &Map<String, Value>, base: C) -> Result<TheoryParams<C>> {
    let objective_keys = ["q", "eta", "r", "data"];
    let (obj, rest): (Map<String, Value>, Map<String, Value>) = map
        .iter()
        .map(|(k, v)| (k.clone(), v.clone()))
        .partition(|(k, _)| objective_keys.contains(&k.as_str()));
    let mut q: QuantileParams = params(&obj)?;
    if !obj.contains_key("eta") {
        q.eta = 0.1;
    }
    let objective = QuantileSpec::new(q.q, q.eta, q.r, q.data).map_err(as_param_error)?;
    let config = merge_params(base, &rest, &[])?;
    Ok(TheoryParams { objective, config })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_and_json_agree() {
        let toml = r#"
experiment = "quantile"
optimizer = "sgld"
seeds = [1, 2]
epochs = 3

[optimizer_config]
lambda = 0.02

[params]
q = 0.9
data = "gaussian(0,1)"
"#;
        let json = r#"{"experiment": "quantile", "optimizer": "sgld", "seeds": [1, 2], "epochs": 3,
            "optimizer_config": {"lambda": 0.02}, "params": {"q": 0.9, "data": "gaussian(0,1)"}}"#;
        let a = ExperimentConfig::from_toml(toml).unwrap();
        let b = ExperimentConfig::from_json(json).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
        let Job::Quantile(spec, train) = a.resolve().unwrap() else { panic!("wrong job") };
        assert_eq!(spec.q, 0.9);
        assert_eq!(train.optimizer, OptimizerKind::Sgld);
        assert_eq!(train.optimizer_config.lambda, 0.02);
        assert_eq!(train.epochs, 3);
    }

    fn field(err: Error) -> String {
        match err {
            Error::Config { field, .. } => field,
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn errors_name_the_field() {
        let mut cfg = ExperimentConfig::new(ExperimentKind::Quantile);
        cfg.optimizer = Some("rmsprop".into());
        assert_eq!(field(cfg.validate().unwrap_err()), "optimizer");

        let cfg = ExperimentConfig::from_toml("experiment = \"quantile\"\n[params]\nqq = 0.5\n").unwrap();
        assert_eq!(field(cfg.validate().unwrap_err()), "params.qq");

        let cfg = ExperimentConfig::from_toml("experiment = \"quantile\"\n[params]\nq = 1.5\n").unwrap();
        assert_eq!(field(cfg.validate().unwrap_err()), "params.q");

        let cfg = ExperimentConfig::from_toml("experiment = \"quantile\"\n[optimizer_config]\nlamda = 0.1\n").unwrap();
        assert_eq!(field(cfg.validate().unwrap_err()), "optimizer_config.lamda");

        let err = ExperimentConfig::from_toml("experiment = \"quantile\"\nepoch = 3\n").unwrap_err();
        assert_eq!(field(err), "epoch");

        let err = ExperimentConfig::from_toml("experiment = \"bogus\"\n").unwrap_err();
        assert!(matches!(err, Error::Config { .. }));

        let mut cfg = ExperimentConfig::new(ExperimentKind::W1Scaling);
        cfg.epochs = Some(3);
        assert_eq!(field(cfg.validate().unwrap_err()), "epochs");
    }

    #[test]
    fn grid_expansion_order() {
        let cfg = ExperimentConfig::from_toml(
            r#"
experiment = "quantile"
[[grid]]
optimizer = ["etheo_poula"]
lambda = [0.1, 0.05, 0.01]
epsilon = [1e-2, 1e-4, 1e-8, 1e-12]
[[grid]]
optimizer = ["sgld"]
lambda = [0.5, 0.1]
"#,
        )
        .unwrap();
        let points = cfg.sweep_points().unwrap();
        assert_eq!(points.len(), 14);
        let first = points[0].optimizer_config.as_ref().unwrap();
        assert_eq!(first["lambda"], 0.1);
        assert_eq!(first["epsilon"], 1e-2);
        assert_eq!(points[1].optimizer_config.as_ref().unwrap()["epsilon"], 1e-4);
        assert_eq!(points[13].optimizer.as_deref(), Some("sgld"));
        cfg.validate().unwrap();

        let single = ExperimentConfig::from_toml("experiment = \"vq\"\n[grid]\nlambda = [0.01]\n").unwrap();
        assert_eq!(single.sweep_points().unwrap().len(), 1);
    }

    #[test]
    fn every_experiment_resolves_with_defaults() {
        for kind in ExperimentKind::ALL {
            let cfg = ExperimentConfig::new(kind);
            cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", kind.tag()));
            assert_eq!(serde_json::to_value(kind).unwrap(), kind.tag());
        }
    }

    #[test]
    fn portfolio_overrides() {
        let cfg = ExperimentConfig::from_toml(
            "experiment = \"portfolio_bs\"\nepochs = 7\n[optimizer_config]\nepsilon = 1e-4\n[params]\nassets = 50\nhidden = 3\nhorizon = 6\n",
        )
        .unwrap();
        let Job::Portfolio(c) = cfg.resolve().unwrap() else { panic!("wrong job") };
        assert_eq!(c.epochs, 7);
        assert_eq!(c.hidden, 3);
        assert_eq!(c.market.assets(), 50);
        assert_eq!(c.market.horizon(), 6);
        // the experiment default step size survives a partial override
        assert_eq!(c.optimizer_config.lambda, 0.05);
        assert_eq!(c.optimizer_config.epsilon, 1e-4);
    }
}
