//! Property suites runnable from the command line.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::gamma_regression::{digamma, gamma_nll, gamma_nll_gradpair, log_gamma_with, reference_errors, GammaModel, LanczosCoefficients};
use crate::neuralnet::gradcheck::{central_difference, central_difference4, kink_distance, max_relative_error, network_gradient_error};
use crate::neuralnet::{Activation, DenseNet};
use crate::objectives::{nearest_code, softmax, vq_gradpair, ScalarDist, VectorQuantizationSpec};
use crate::optimizers::{tame_f, tame_g_component};
use crate::portfolio::{loss_and_grad, BsMarket, InitialWealth, MarketSpec, PolicyStack, StateInput, Workspace};
use crate::rng_stats::mean_and_se;
use crate::theory::{lambda_max, lognormal_shifted_moment, StepSizeInputs};
use crate::SeededRng;

pub const TAMING_DRAWS: usize = 1_000_000;
pub const GRADIENT_SEEDS: u64 = 20;
pub const GRADIENT_TOLERANCE: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Taming,
    Gradients,
    Special,
    SoftmaxVoronoi,
    LambdaMax,
    Rng,
}

impl Suite {
    pub const ALL: [Suite; 6] = [Suite::Taming, Suite::Gradients, Suite::Special, Suite::SoftmaxVoronoi, Suite::LambdaMax, Suite::Rng];

    pub fn tag(self) -> &'static str {
        match self {
            Suite::Taming => "taming",
            Suite::Gradients => "gradients",
            Suite::Special => "special",
            Suite::SoftmaxVoronoi => "softmax_voronoi",
            Suite::LambdaMax => "lambda_max",
            Suite::Rng => "rng",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Suite::Taming => "tamed G and F components stay within their step-size bounds (10^6 draws)",
            Suite::Gradients => "backprop against finite differences for every network and loss (20 seeds each)",
            Suite::Special => "log-gamma and digamma against the reference table and each other",
            Suite::SoftmaxVoronoi => "softmax simplex and nearest-code (Voronoi) gradient structure",
            Suite::LambdaMax => "step-size bound hand values and monotonicity in the moment order",
            Suite::Rng => "seeded streams are reproducible, independent and well distributed",
        }
    }

    pub fn run(self) -> Vec<Check> {
        match self {
            Suite::Taming => taming_suite(TAMING_DRAWS, 0x7a3e),
            Suite::Gradients => gradient_suite(),
            Suite::Special => special_suite(&LanczosCoefficients::default()),
            Suite::SoftmaxVoronoi => softmax_voronoi_suite(),
            Suite::LambdaMax => lambda_max_suite(),
            Suite::Rng => rng_suite(),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL.into_iter().find(|k| k.tag() == s).ok_or_else(|| {
            let known: Vec<_> = Suite::ALL.iter().map(|k| k.tag()).collect();
            Error::config("suite", format!("unknown suite `{s}` (expected all or one of {})", known.join(", ")))
        })
    }
}

/// `all` or a single suite tag.
pub fn parse_suites(tag: &str) -> Result<Vec<Suite>> {
    if tag == "all" {
        Ok(Suite::ALL.to_vec())
    } else {
        Ok(vec![tag.parse()?])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }

    fn from_error(name: impl Into<String>, e: Error) -> Self {
        Self::new(name, false, format!("error: {e}"))
    }
}

#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
    pub elapsed_ms: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&Check> {
        self.checks.iter().find(|c| !c.passed)
    }
}

pub fn run_suites(suites: &[Suite]) -> Vec<SuiteReport> {
    suites
        .iter()
        .map(|&suite| {
            let start = Instant::now();
            let checks = suite.run();
            SuiteReport {
                suite,
                checks,
                elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
            }
        })
        .collect()
}

/// Log-uniform draw on `[10^lo, 10^hi]`.
fn log_uniform(rng: &mut SeededRng, lo: f64, hi: f64) -> f64 {
    10f64.powf(rng.uniform_range(lo, hi))
}

pub fn taming_suite(draws: usize, seed: u64) -> Vec<Check> {
    let mut rng = SeededRng::new(seed);
    let (mut g_bad, mut f_bad) = (0usize, 0usize);
    let (mut g_worst, mut f_worst) = (0f64, 0f64);
    let mut theta = [0.0; 4];
    let mut f = [0.0; 4];
    for _ in 0..draws {
        let lambda = log_uniform(&mut rng, -8.0, 0.0);
        let eps = log_uniform(&mut rng, -14.0, 0.0);
        let g = rng.gauss() * log_uniform(&mut rng, -10.0, 10.0);
        let bound = 2.0 / lambda.sqrt();
        let tamed = tame_g_component(g, lambda, eps);
        g_worst = g_worst.max(tamed.abs() / bound);
        if !(tamed.abs() <= bound) {
            g_bad += 1;
        }

        let dim = 1 + rng.below(4);
        let eta = log_uniform(&mut rng, -4.0, 1.0);
        let r = rng.uniform_range(0.0, 3.0);
        let scale = log_uniform(&mut rng, -3.0, 1.0);
        for t in &mut theta[..dim] {
            *t = rng.gauss() * scale;
        }
        let norm_sq: f64 = theta[..dim].iter().map(|t| t * t).sum();
        let grow = if r == 0.0 { 1.0 } else { norm_sq.powf(r) };
        for i in 0..dim {
            f[i] = eta * theta[i] * grow;
        }
        let tamed = tame_f(&f[..dim], &theta[..dim], lambda, r);
        for i in 0..dim {
            let bound = eta * theta[i].abs() / lambda.sqrt();
            if bound > 0.0 {
                f_worst = f_worst.max(tamed[i].abs() / bound);
            }
            if !(tamed[i].abs() <= bound) {
                f_bad += 1;
            }
        }
    }
    vec![
        Check::new("tamed G within 2/sqrt(lambda)", g_bad == 0, format!("{g_bad} violations in {draws} draws, worst ratio {g_worst:.6}")),
        Check::new("tamed F within eta|theta_i|/sqrt(lambda)", f_bad == 0, format!("{f_bad} violations, worst ratio {f_worst:.6}")),
    ]
}

fn probe_far_from_kinks(net: &DenseNet, rng: &mut SeededRng, dim: usize, margin: f64) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..dim).map(|_| rng.uniform_range(-1.5, 1.5)).collect();
        if kink_distance(net, &x) > margin {
            return x;
        }
    }
}

fn network_check(name: &str, make: impl Fn() -> DenseNet, dim: usize) -> Check {
    let mut worst: f64 = 0.0;
    for seed in 0..GRADIENT_SEEDS {
        let mut rng = SeededRng::new(seed);
        let mut net = make();
        net.init_params(&mut rng);
        let mut theta = net.params();
        theta.iter_mut().for_each(|t| *t += 0.3 * rng.gauss());
        net.set_params(&theta);
        let x = probe_far_from_kinks(&net, &mut rng, dim, 1e-3);
        let up: Vec<f64> = (0..net.output_dim()).map(|_| rng.gauss()).collect();
        worst = worst.max(network_gradient_error(&net, &x, &up, 1e-5));
    }
    Check::new(name, worst <= GRADIENT_TOLERANCE, format!("max relative error {worst:.3e} over {GRADIENT_SEEDS} seeds"))
}

fn portfolio_check() -> Result<f64> {
    let spec = MarketSpec::BlackScholes(BsMarket::five_assets().with_horizon(3));
    let mut worst: f64 = 0.0;
    for seed in 0..GRADIENT_SEEDS {
        let mut rng = SeededRng::new(seed);
        let stack = PolicyStack::two_hidden(3, 2, Activation::Sigmoid, spec.bounds(), spec.gamma(), spec.risk_free(), StateInput::Wealth, &mut rng)?;
        let batch = spec.sample(8, InitialWealth::Uniform { lo: 0.9, hi: 1.1 }, &mut rng);
        let (_, grad) = loss_and_grad(&stack, &batch, &mut Workspace::new())?;
        let mut probe = stack.clone();
        let mut ws = Workspace::new();
        let numeric = central_difference(
            |t| {
                probe.set_params(t).expect("same layout");
                loss_and_grad(&probe, &batch, &mut ws).expect("valid batch").0
            },
            &stack.params(),
            1e-5,
        );
        worst = worst.max(max_relative_error(&grad, &numeric));
    }
    Ok(worst)
}

fn gamma_check() -> Result<f64> {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut seed = 0;
    while checked < GRADIENT_SEEDS {
        seed += 1;
        let mut rng = SeededRng::new(seed);
        let mut model = GammaModel::new(3, 6, 5, &mut rng);
        model.phi = rng.uniform_range(-1.0, 1.0);
        let z: Vec<f64> = (0..3).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        if kink_distance(&model.net, &z) < 1e-2 {
            continue;
        }
        let y = rng.uniform_range(0.2, 5.0);
        let gp = gamma_nll_gradpair(y, &z, &model, 0.0, 0.0)?;
        let mut probe = model.clone();
        let numeric = central_difference4(
            |t| {
                probe.set_params(t).expect("same layout");
                gamma_nll(y, &z, &probe).unwrap_or(f64::NAN)
            },
            &model.params(),
            1e-3,
        );
        worst = worst.max(max_relative_error(&gp.g, &numeric));
        checked += 1;
    }
    Ok(worst)
}

pub fn gradient_suite() -> Vec<Check> {
    let mut checks = vec![
        network_check("two-hidden-layer policy network", || DenseNet::two_hidden(1, 5, 5, Activation::Relu, Activation::Tanh), 1),
        network_check("single-hidden-layer random-feature network", || DenseNet::random_feature(2, 6, 5), 2),
        network_check(
            "leaky-ReLU regression network",
            || DenseNet::two_hidden_widths(4, 5, 3, 1, Activation::LeakyRelu, Activation::Identity),
            4,
        ),
    ];
    let tol = |name: &str, r: Result<f64>| match r {
        Ok(e) => Check::new(name, e <= GRADIENT_TOLERANCE, format!("max relative error {e:.3e} over {GRADIENT_SEEDS} seeds")),
        Err(e) => Check::from_error(name, e),
    };
    checks.push(tol("portfolio wealth unroll", portfolio_check()));
    checks.push(tol("gamma negative log-likelihood", gamma_check()));
    checks
}

/// Runs against the given Lanczos set so a corrupted set can be shown to
/// fail.
pub fn special_suite(coef: &LanczosCoefficients) -> Vec<Check> {
    let mut checks = Vec::new();
    match reference_errors(coef) {
        Ok((lg, dg)) => {
            checks.push(Check::new("log_gamma reference table", lg <= 1e-12, format!("max absolute error {lg:.3e}")));
            checks.push(Check::new("digamma reference table", dg <= 1e-10, format!("max absolute error {dg:.3e}")));
        }
        Err(e) => checks.push(Check::from_error("log_gamma reference table", e)),
    }
    // ψ is the derivative of ln Γ
    let mut worst: f64 = 0.0;
    let mut failure = None;
    for x in [0.3, 1.0, 2.5, 7.0, 40.0, 300.0] {
        let h = 1e-3 * x;
        let value = (|| -> Result<f64> {
            let d = (-log_gamma_with(x + 2.0 * h, coef)? + 8.0 * log_gamma_with(x + h, coef)? - 8.0 * log_gamma_with(x - h, coef)?
                + log_gamma_with(x - 2.0 * h, coef)?)
                / (12.0 * h);
            Ok((d - digamma(x)?).abs() / digamma(x)?.abs().max(1.0))
        })();
        match value {
            Ok(v) => worst = worst.max(v),
            Err(e) => failure = Some(e),
        }
    }
    checks.push(match failure {
        Some(e) => Check::from_error("digamma is the derivative of log_gamma", e),
        None => Check::new("digamma is the derivative of log_gamma", worst <= 1e-7, format!("max relative gap {worst:.3e}")),
    });
    checks
}

pub fn softmax_voronoi_suite() -> Vec<Check> {
    let mut rng = SeededRng::new(0x50f7);
    let (mut simplex_bad, mut shift_bad) = (0, 0);
    for _ in 0..10_000 {
        let n = 1 + rng.below(8);
        let spread = log_uniform(&mut rng, -2.0, 2.8);
        let w: Vec<f64> = (0..n).map(|_| rng.uniform_range(-spread, spread)).collect();
        let s = softmax(&w);
        let sum: f64 = s.iter().sum();
        if (sum - 1.0).abs() > 1e-12 || s.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            simplex_bad += 1;
        }
        let shifted: Vec<f64> = w.iter().map(|v| v + 3.7).collect();
        if softmax(&shifted).iter().zip(&s).any(|(a, b)| (a - b).abs() > 1e-12) {
            shift_bad += 1;
        }
    }

    let spec = VectorQuantizationSpec::new(4, 0.0, 0.0, ScalarDist::UNIT_UNIFORM).expect("valid spec");
    let (mut cell_bad, mut grad_bad) = (0, 0);
    for _ in 0..10_000 {
        let codes: Vec<f64> = (0..4).map(|_| rng.uniform()).collect();
        let x = rng.uniform();
        let k = nearest_code(&codes, x);
        if codes.iter().any(|c| (x - c).abs() < (x - codes[k]).abs()) {
            cell_bad += 1;
        }
        let gp = vq_gradpair(&codes, x, &spec);
        let active: Vec<usize> = gp.g.iter().enumerate().filter(|(_, g)| **g != 0.0).map(|(i, _)| i).collect();
        let expected = 2.0 * (codes[k] - x);
        if active.iter().any(|&i| i != k) || (gp.g[k] - expected).abs() > 1e-15 * expected.abs().max(1.0) {
            grad_bad += 1;
        }
    }
    vec![
        Check::new("softmax lies on the simplex", simplex_bad == 0, format!("{simplex_bad} failures in 10000 draws")),
        Check::new("softmax is shift invariant", shift_bad == 0, format!("{shift_bad} failures")),
        Check::new("nearest code owns its Voronoi cell", cell_bad == 0, format!("{cell_bad} failures")),
        Check::new("quantization gradient acts on the nearest code only", grad_bad == 0, format!("{grad_bad} failures")),
    ]
}

pub fn lambda_max_suite() -> Vec<Check> {
    let inputs = |p, a_f, k_f, m| StepSizeInputs { p, a_f, k_f, rho: 1.0, moment_2p_rho: m };
    let mut hand = Vec::new();
    for a in [1.0, 2.0, 7.5] {
        hand.push((inputs(1, a, a, 1.0), 1.0 / (16.0 * a * a)));
    }
    hand.push((inputs(2, 1.0, 2.0, 3.0), 0.25 / (16.0 * 4.0 * 4.0 * 9.0 * 9.0)));
    hand.push((inputs(1, 0.1, 1.0, 1.0), 0.01 / 16.0));
    hand.push((inputs(2, 0.5, 0.25, 1.0), 2f64.powf(2.0 / 3.0) / (16.0 * 0.0625 * 4.0 * 9.0)));
    let mut worst: f64 = 0.0;
    let mut err = None;
    for (input, expect) in &hand {
        match lambda_max(input) {
            Ok(v) => worst = worst.max((v - expect).abs() / expect),
            Err(e) => err = Some(e),
        }
    }
    let hand_check = match err {
        Some(e) => Check::from_error("hand-computed values", e),
        None => Check::new("hand-computed values", worst <= 1e-14, format!("max relative error {worst:.1e} over {} cases", hand.len())),
    };

    let mut prev = f64::INFINITY;
    let mut mono = Check::new("nonincreasing in p for a lognormal initial law", true, "p = 1..8");
    for p in 1..=8u32 {
        let m = lognormal_shifted_moment(0.0, 0.5, 2.0 * p as f64);
        match lambda_max(&StepSizeInputs { p, a_f: 0.5, k_f: 2.0, rho: 1.0, moment_2p_rho: m }) {
            Ok(v) if v <= prev => prev = v,
            Ok(v) => {
                mono = Check::new(mono.name.clone(), false, format!("p = {p}: {v:e} > {prev:e}"));
                break;
            }
            Err(e) => {
                mono = Check::from_error(mono.name.clone(), e);
                break;
            }
        }
    }
    vec![hand_check, mono]
}

pub fn rng_suite() -> Vec<Check> {
    let draw = |seed| {
        let mut r = SeededRng::new(seed);
        (0..1000).map(|_| r.uniform()).collect::<Vec<_>>()
    };
    let reproducible = draw(42) == draw(42);

    let mut root = SeededRng::new(42);
    let mut a = root.split();
    let mut b = root.split();
    let xa: Vec<f64> = (0..1000).map(|_| a.uniform()).collect();
    let xb: Vec<f64> = (0..1000).map(|_| b.uniform()).collect();
    let (ma, _) = mean_and_se(&xa);
    let cross: f64 = xa.iter().zip(&xb).map(|(x, y)| (x - 0.5) * (y - 0.5)).sum::<f64>() / 1000.0;
    // correlation of independent uniforms has sd 1/√n ≈ 0.032
    let independent = xa != xb && (cross / (1.0 / 12.0)).abs() < 0.15;

    let mut r = SeededRng::new(7);
    let u: Vec<f64> = (0..200_000).map(|_| r.uniform()).collect();
    let (mu, se_u) = mean_and_se(&u);
    let g: Vec<f64> = (0..200_000).map(|_| r.gauss()).collect();
    let (mg, se_g) = mean_and_se(&g);
    let var_g = g.iter().map(|x| (x - mg) * (x - mg)).sum::<f64>() / (g.len() - 1) as f64;
    let uniform_ok = (mu - 0.5).abs() < 5.0 * se_u && u.iter().all(|v| (0.0..1.0).contains(v));
    let gauss_ok = mg.abs() < 5.0 * se_g && (var_g - 1.0).abs() < 5.0 * (2.0 / g.len() as f64).sqrt();
    vec![
        Check::new("same seed reproduces the stream", reproducible, ""),
        Check::new("split streams are distinct and uncorrelated", independent, format!("first-stream mean {ma:.4}, correlation {:.4}", cross * 12.0)),
        Check::new("uniform mean", uniform_ok, format!("mean {mu:.5} (se {se_u:.1e})")),
        Check::new("gaussian mean and variance", gauss_ok, format!("mean {mg:.5}, variance {var_g:.5}")),
    ]
}
