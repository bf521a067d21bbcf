use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::market::EpisodeBatch;
use crate::error::{check_dim, Error, Result};
use crate::neuralnet::{Activation, BatchTape, DenseNet, Tape};
use crate::rng_stats::mean_and_se;
use crate::SeededRng;

/// Per-asset action box `D = ∏[lo_i, hi_i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionBounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ActionBounds {
    pub fn uniform(assets: usize, lo: f64, hi: f64) -> Self {
        Self {
            lo: vec![lo; assets],
            hi: vec![hi; assets],
        }
    }

    pub fn assets(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, a: &[f64]) -> bool {
        a.iter().zip(self.lo.iter().zip(&self.hi)).all(|(x, (l, h))| *l <= *x && *x <= *h)
    }

    pub fn half_width(&self, i: usize) -> f64 {
        0.5 * (self.hi[i] - self.lo[i])
    }
}

/// Maps a tanh output in `[−1, 1]` affinely onto `[lo_i, hi_i]`.
pub fn action_map(raw: &[f64], bounds: &ActionBounds) -> Vec<f64> {
    let mut out = vec![0.0; raw.len()];
    action_map_into(raw, bounds, &mut out);
    out
}

pub(crate) fn action_map_into(raw: &[f64], bounds: &ActionBounds, out: &mut [f64]) {
    for (i, (a, x)) in out.iter_mut().zip(raw).enumerate() {
        *a = (bounds.lo[i] + (bounds.hi[i] - bounds.lo[i]) * (x + 1.0) * 0.5).clamp(bounds.lo[i], bounds.hi[i]);
    }
}

/// What each policy network sees.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateInput {
    /// `W_k − 1`.
    Wealth,
    /// `(W_k − 1, R_{k−1})`.
    WealthAndLag,
}

impl StateInput {
    pub fn dim(self, assets: usize) -> usize {
        match self {
            StateInput::Wealth => 1,
            StateInput::WealthAndLag => 1 + assets,
        }
    }
}

/// One policy network per rebalancing date, applied to the wealth
/// recursion `W_{k+1} = W_k(⟨a_k, R_k⟩ + R_f)` under the loss `(W_K − γ/2)²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyStack {
    pub nets: Vec<DenseNet>,
    pub bounds: ActionBounds,
    pub gamma: f64,
    pub risk_free: f64,
    pub state: StateInput,
}

impl PolicyStack {
    pub fn new(
        nets: Vec<DenseNet>,
        bounds: ActionBounds,
        gamma: f64,
        risk_free: f64,
        state: StateInput,
    ) -> Result<Self> {
        if nets.is_empty() {
            return Err(Error::invalid("nets", "a policy stack needs at least one network"));
        }
        let p = bounds.assets();
        check_dim("action bounds", p, bounds.hi.len())?;
        for net in &nets {
            check_dim("policy input", state.dim(p), net.input_dim())?;
            check_dim("policy output", p, net.output_dim())?;
        }
        Ok(Self {
            nets,
            bounds,
            gamma,
            risk_free,
            state,
        })
    }

    /// `horizon` initialized two-hidden-layer networks with a tanh output.
    #[allow(clippy::too_many_arguments)]
    pub fn two_hidden(
        horizon: usize,
        hidden: usize,
        activation: Activation,
        bounds: ActionBounds,
        gamma: f64,
        risk_free: f64,
        state: StateInput,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let p = bounds.assets();
        let nets = (0..horizon)
            .map(|_| {
                let mut net = DenseNet::two_hidden(state.dim(p), hidden, p, activation, Activation::Tanh);
                net.init_params(rng);
                net
            })
            .collect();
        Self::new(nets, bounds, gamma, risk_free, state)
    }

    pub fn horizon(&self) -> usize {
        self.nets.len()
    }

    pub fn assets(&self) -> usize {
        self.bounds.assets()
    }

    pub fn n_params(&self) -> usize {
        self.nets.iter().map(|n| n.n_params()).sum()
    }

    pub fn has_trainable(&self) -> bool {
        self.nets.iter().any(|n| n.has_trainable())
    }

    pub fn freeze(&mut self) {
        self.nets.iter_mut().for_each(|n| n.freeze());
    }

    pub fn params(&self) -> Vec<f64> {
        let mut flat = vec![0.0; self.n_params()];
        let mut off = 0;
        for net in &self.nets {
            net.write_params(&mut flat[off..off + net.n_params()]);
            off += net.n_params();
        }
        flat
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        check_dim("policy parameters", self.n_params(), flat.len())?;
        let mut off = 0;
        for net in &mut self.nets {
            let n = net.n_params();
            net.set_params(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Cash-only terminal loss `(W₀R_f^K − γ/2)²` for a given start.
    pub fn cash_loss(&self, w0: f64) -> f64 {
        (w0 * self.risk_free.powi(self.horizon() as i32) - 0.5 * self.gamma).powi(2)
    }

    fn check_batch(&self, batch: &EpisodeBatch) -> Result<()> {
        batch.validate()?;
        check_dim("batch horizon", self.horizon(), batch.horizon)?;
        check_dim("batch assets", self.assets(), batch.assets)?;
        if self.state == StateInput::WealthAndLag {
            check_dim("initial lag", self.assets(), batch.lag0.len())?;
        }
        Ok(())
    }
}

/// Reusable per-path buffers for [`path_forward`] and [`path_backward`].
#[derive(Clone, Debug, Default)]
pub struct PathWorkspace {
    tapes: Vec<Tape>,
    wealth: Vec<f64>,
    growth: Vec<f64>,
    input: Vec<f64>,
    action: Vec<f64>,
    upstream: Vec<f64>,
    input_grad: Vec<f64>,
    /// Set when an emitted action left D.
    pub out_of_bounds: bool,
}

impl PathWorkspace {
    pub fn new() -> Self {
        Self::default()
    }

    fn fit(&mut self, stack: &PolicyStack) {
        let k = stack.horizon();
        let p = stack.assets();
        if self.tapes.len() != k {
            self.tapes = vec![Tape::new(); k];
        }
        self.wealth.resize(k + 1, 0.0);
        self.growth.resize(k, 0.0);
        self.input.resize(stack.state.dim(p), 0.0);
        self.action.resize(p, 0.0);
        self.upstream.resize(p, 0.0);
        self.input_grad.resize(stack.state.dim(p), 0.0);
    }

    /// Wealth trajectory `W_0..W_K` of the last unrolled path.
    pub fn wealth(&self) -> &[f64] {
        &self.wealth
    }
}

/// Rolls one path forward, keeping tapes for [`path_backward`].
/// `returns` holds `K × p` excess returns. Returns `W_K`.
pub fn path_forward(stack: &PolicyStack, w0: f64, returns: &[f64], lag0: &[f64], ws: &mut PathWorkspace) -> f64 {
    ws.fit(stack);
    let p = stack.assets();
    ws.wealth[0] = w0;
    for (k, net) in stack.nets.iter().enumerate() {
        let w = ws.wealth[k];
        ws.input[0] = w - 1.0;
        if stack.state == StateInput::WealthAndLag {
            let lag = if k == 0 { lag0 } else { &returns[(k - 1) * p..k * p] };
            ws.input[1..].copy_from_slice(lag);
        }
        let raw = net.forward_with(&ws.input, &mut ws.tapes[k]);
        action_map_into(raw, &stack.bounds, &mut ws.action);
        if !stack.bounds.contains(&ws.action) {
            ws.out_of_bounds = true;
        }
        let r = &returns[k * p..(k + 1) * p];
        let g: f64 = ws.action.iter().zip(r).map(|(a, x)| a * x).sum::<f64>() + stack.risk_free;
        ws.growth[k] = g;
        ws.wealth[k + 1] = w * g;
    }
    ws.wealth[stack.horizon()]
}

/// Reverse pass after [`path_forward`]: adds `adj_terminal · ∂W_K/∂θ` into
/// `grad` (laid out as [`PolicyStack::params`]) and returns `adj_terminal ·
/// ∂W_K/∂W_0`.
pub fn path_backward(stack: &PolicyStack, returns: &[f64], adj_terminal: f64, grad: &mut [f64], ws: &mut PathWorkspace) -> f64 {
    let p = stack.assets();
    let mut offsets = Vec::with_capacity(stack.horizon());
    let mut off = 0;
    for net in &stack.nets {
        offsets.push(off);
        off += net.n_params();
    }
    let mut adj = adj_terminal;
    for k in (0..stack.horizon()).rev() {
        let net = &stack.nets[k];
        let w = ws.wealth[k];
        let r = &returns[k * p..(k + 1) * p];
        for i in 0..p {
            ws.upstream[i] = adj * w * r[i] * stack.bounds.half_width(i);
        }
        let start = offsets[k];
        net.backward_accumulate(
            &mut ws.tapes[k],
            &ws.upstream,
            &mut grad[start..start + net.n_params()],
            Some(&mut ws.input_grad),
        );
        adj = adj * ws.growth[k] + ws.input_grad[0];
    }
    adj
}

/// Buffers for unrolling a block of paths together. Everything is stored
/// unit-major (`buf[row * n + j]` for path `j`) so the per-layer loops run
/// over paths.
#[derive(Clone, Debug, Default)]
pub struct Workspace {
    tapes: Vec<BatchTape>,
    n: usize,
    wealth: Vec<f64>,
    growth: Vec<f64>,
    input: Vec<f64>,
    action: Vec<f64>,
    upstream: Vec<f64>,
    input_grad: Vec<f64>,
    adj: Vec<f64>,
    /// Set when an emitted action left D.
    pub out_of_bounds: bool,
}

impl Workspace {
    pub fn new() -> Self {
        Self::default()
    }

    fn fit(&mut self, stack: &PolicyStack, n: usize) {
        let k = stack.horizon();
        let p = stack.assets();
        let d = stack.state.dim(p);
        if self.tapes.len() != k {
            self.tapes = vec![BatchTape::new(); k];
        }
        self.n = n;
        self.wealth.resize((k + 1) * n, 0.0);
        self.growth.resize(k * n, 0.0);
        self.input.resize(d * n, 0.0);
        self.action.resize(p * n, 0.0);
        self.upstream.resize(p * n, 0.0);
        self.input_grad.resize(d * n, 0.0);
        self.adj.resize(n, 0.0);
    }

    /// `W_k` of every path in the last block.
    pub fn wealth_at(&self, k: usize) -> &[f64] {
        &self.wealth[k * self.n..(k + 1) * self.n]
    }
}

/// Rolls paths `range` of `batch` forward together and returns their
/// terminal wealths. Tapes are kept for [`block_backward`].
pub fn block_forward<'w>(
    stack: &PolicyStack,
    batch: &EpisodeBatch,
    range: std::ops::Range<usize>,
    ws: &'w mut Workspace,
) -> &'w [f64] {
    let n = range.len();
    ws.fit(stack, n);
    let p = stack.assets();
    let horizon = stack.horizon();
    let stride = horizon * p;
    let rets = &batch.returns[range.start * stride..range.end * stride];
    ws.wealth[..n].copy_from_slice(&batch.w0[range]);
    for (k, net) in stack.nets.iter().enumerate() {
        let (done, next) = ws.wealth.split_at_mut((k + 1) * n);
        let w = &done[k * n..];
        for (x, wj) in ws.input[..n].iter_mut().zip(w) {
            *x = wj - 1.0;
        }
        if stack.state == StateInput::WealthAndLag {
            for i in 0..p {
                let row = &mut ws.input[(1 + i) * n..(2 + i) * n];
                if k == 0 {
                    row.fill(batch.lag0[i]);
                } else {
                    for (j, x) in row.iter_mut().enumerate() {
                        *x = rets[j * stride + (k - 1) * p + i];
                    }
                }
            }
        }
        let raw = net.forward_batch(&ws.input, n, &mut ws.tapes[k]);
        let growth = &mut ws.growth[k * n..(k + 1) * n];
        growth.fill(stack.risk_free);
        for i in 0..p {
            let (lo, hi) = (stack.bounds.lo[i], stack.bounds.hi[i]);
            let acts = &mut ws.action[i * n..(i + 1) * n];
            for (a, x) in acts.iter_mut().zip(&raw[i * n..(i + 1) * n]) {
                *a = (lo + (hi - lo) * (x + 1.0) * 0.5).clamp(lo, hi);
            }
            if acts.iter().any(|a| !(lo <= *a && *a <= hi)) {
                ws.out_of_bounds = true;
            }
            for (j, (g, a)) in growth.iter_mut().zip(acts.iter()).enumerate() {
                *g += a * rets[j * stride + k * p + i];
            }
        }
        for ((wn, wj), g) in next[..n].iter_mut().zip(w).zip(growth.iter()) {
            *wn = wj * g;
        }
    }
    &ws.wealth[horizon * n..(horizon + 1) * n]
}

/// Reverse pass after [`block_forward`]: adds `Σ_j adj_j · ∂W_K^j/∂θ` into
/// `grad` and leaves `adj_j · ∂W_K^j/∂W_0^j` in the returned slice.
pub fn block_backward<'w>(
    stack: &PolicyStack,
    batch: &EpisodeBatch,
    range: std::ops::Range<usize>,
    adj_terminal: &[f64],
    grad: &mut [f64],
    ws: &'w mut Workspace,
) -> &'w [f64] {
    let n = range.len();
    debug_assert_eq!(ws.n, n);
    let p = stack.assets();
    let stride = stack.horizon() * p;
    let rets = &batch.returns[range.start * stride..range.end * stride];
    ws.adj.copy_from_slice(adj_terminal);
    let mut end = grad.len();
    for k in (0..stack.horizon()).rev() {
        let net = &stack.nets[k];
        let start = end - net.n_params();
        let w = &ws.wealth[k * n..(k + 1) * n];
        for i in 0..p {
            let hw = stack.bounds.half_width(i);
            let up = &mut ws.upstream[i * n..(i + 1) * n];
            for (j, u) in up.iter_mut().enumerate() {
                *u = ws.adj[j] * w[j] * rets[j * stride + k * p + i] * hw;
            }
        }
        net.backward_batch(&mut ws.tapes[k], &ws.upstream, &mut grad[start..end], Some(&mut ws.input_grad));
        let growth = &ws.growth[k * n..(k + 1) * n];
        for ((a, g), d) in ws.adj.iter_mut().zip(growth).zip(&ws.input_grad[..n]) {
            *a = *a * g + d;
        }
        end = start;
    }
    &ws.adj
}

/// Terminal wealths and wealth trajectories of a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Unroll {
    pub terminal: Vec<f64>,
    /// `(K+1)` wealths per path, path-major.
    pub wealth_paths: Vec<f64>,
}

pub fn unroll_wealth(stack: &PolicyStack, batch: &EpisodeBatch) -> Result<Unroll> {
    stack.check_batch(batch)?;
    let mut ws = PathWorkspace::new();
    let mut terminal = Vec::with_capacity(batch.len());
    let mut wealth_paths = Vec::with_capacity(batch.len() * (stack.horizon() + 1));
    for i in 0..batch.len() {
        terminal.push(path_forward(stack, batch.w0[i], batch.path(i), &batch.lag0, &mut ws));
        wealth_paths.extend_from_slice(ws.wealth());
    }
    if ws.out_of_bounds {
        return Err(Error::NumericalFailure("policy emitted an action outside D".into()));
    }
    Ok(Unroll { terminal, wealth_paths })
}

/// Mean `(W_K − γ/2)²` over the batch and its gradient in the flat
/// parameters of the stack.
pub fn loss_and_grad(stack: &PolicyStack, batch: &EpisodeBatch, ws: &mut Workspace) -> Result<(f64, Vec<f64>)> {
    stack.check_batch(batch)?;
    let mut grad = vec![0.0; stack.n_params()];
    let n = batch.len();
    let target = 0.5 * stack.gamma;
    ws.out_of_bounds = false;
    let terminal = block_forward(stack, batch, 0..n, ws);
    let loss = terminal.iter().map(|w| (w - target).powi(2)).sum::<f64>() / n as f64;
    let adj: Vec<f64> = terminal.iter().map(|w| 2.0 * (w - target) / n as f64).collect();
    block_backward(stack, batch, 0..n, &adj, &mut grad, ws);
    if ws.out_of_bounds {
        return Err(Error::NumericalFailure("policy emitted an action outside D".into()));
    }
    Ok((loss, grad))
}

/// Monte Carlo score `mean (W_K − γ/2)²` with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub mean: f64,
    pub se: f64,
}

const SCORE_CHUNK: usize = 4096;
const BLOCK: usize = 512;

/// Scores a stack on a fixed batch. Chunked so the result does not depend on
/// the thread count.
pub fn evaluate_score(stack: &PolicyStack, batch: &EpisodeBatch) -> Result<Score> {
    stack.check_batch(batch)?;
    let target = 0.5 * stack.gamma;
    let n = batch.len();
    let chunks: Vec<(usize, usize)> = (0..n).step_by(SCORE_CHUNK).map(|s| (s, (s + SCORE_CHUNK).min(n))).collect();
    let parts: Vec<(Vec<f64>, bool)> = chunks
        .par_iter()
        .map(|&(s, e)| {
            let mut ws = Workspace::new();
            let mut losses = Vec::with_capacity(e - s);
            for b in (s..e).step_by(BLOCK) {
                let terminal = block_forward(stack, batch, b..(b + BLOCK).min(e), &mut ws);
                losses.extend(terminal.iter().map(|w| (w - target).powi(2)));
            }
            (losses, ws.out_of_bounds)
        })
        .collect();
    if parts.iter().any(|(_, oob)| *oob) {
        return Err(Error::NumericalFailure("policy emitted an action outside D".into()));
    }
    let losses: Vec<f64> = parts.into_iter().flat_map(|(l, _)| l).collect();
    let (mean, se) = mean_and_se(&losses);
    if !mean.is_finite() {
        return Err(Error::NumericalFailure(format!("non-finite test score {mean}")));
    }
    Ok(Score { mean, se })
}
