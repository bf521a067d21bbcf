//! Small dense feedforward networks with hand-written backpropagation.
//!
//! A [`DenseNet`] is a chain of [`Layer`]s. Each layer marks its weight and
//! bias as trainable or fixed; only trainable entries appear in the flat
//! parameter vector, laid out as all trainable biases (layer order) followed
//! by all trainable weights (layer order, row-major).

mod activation;
mod batch;
mod checkpoint;
pub mod gradcheck;
mod params;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::SeededRng;

pub use activation::{leaky_relu, sigmoid, tanh, Activation, LEAKY_SLOPE};
pub use batch::BatchTape;
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use params::{ParamLayout, ParamPart, ParamView, Segment};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub out_dim: usize,
    pub in_dim: usize,
    /// Row-major `out_dim × in_dim`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
    pub weight_trainable: bool,
    pub bias_trainable: bool,
}

impl Layer {
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            out_dim,
            in_dim,
            weight: vec![0.0; out_dim * in_dim],
            bias: vec![0.0; out_dim],
            activation,
            weight_trainable: true,
            bias_trainable: true,
        }
    }

    pub fn fixed_weight(mut self) -> Self {
        self.weight_trainable = false;
        self
    }

    pub fn without_bias(mut self) -> Self {
        self.bias_trainable = false;
        self
    }

    pub fn is_frozen(&self) -> bool {
        !self.weight_trainable && !self.bias_trainable
    }

    fn forward_into(&self, input: &[f64], pre: &mut [f64], out: &mut [f64]) {
        let rows = self.weight.chunks_exact(self.in_dim);
        for ((p, row), b) in pre.iter_mut().zip(rows).zip(&self.bias) {
            *p = row.iter().zip(input).fold(*b, |acc, (w, x)| acc + w * x);
        }
        match self.activation {
            Activation::Identity => out.copy_from_slice(pre),
            Activation::Relu => out.iter_mut().zip(pre.iter()).for_each(|(o, p)| *o = p.max(0.0)),
            Activation::LeakyRelu => out.iter_mut().zip(pre.iter()).for_each(|(o, p)| *o = leaky_relu(*p)),
            Activation::Tanh => out.iter_mut().zip(pre.iter()).for_each(|(o, p)| *o = tanh(*p)),
            Activation::Sigmoid => out.iter_mut().zip(pre.iter()).for_each(|(o, p)| *o = sigmoid(*p)),
        }
    }
}

/// Cached activations from one forward pass plus backward scratch space.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`.
    acts: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    delta: Vec<f64>,
    upstream: Vec<f64>,
    shape: Vec<usize>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn fit(&mut self, net: &DenseNet) {
        if self.shape.len() == net.layers.len() + 1
            && self.shape[0] == net.input_dim()
            && net.layers.iter().zip(&self.shape[1..]).all(|(l, &n)| l.out_dim == n)
        {
            return;
        }
        let shape: Vec<usize> = std::iter::once(net.input_dim())
            .chain(net.layers.iter().map(|l| l.out_dim))
            .collect();
        self.acts = shape.iter().map(|&n| vec![0.0; n]).collect();
        self.pre = shape[1..].iter().map(|&n| vec![0.0; n]).collect();
        let widest = shape.iter().copied().max().unwrap_or(0);
        self.delta = vec![0.0; widest];
        self.upstream = vec![0.0; widest];
        self.shape = shape;
    }

    pub fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn input(&self) -> &[f64] {
        self.acts.first().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Pre-activations of layer `l` from the last forward pass.
    pub fn pre_activation(&self, l: usize) -> &[f64] {
        &self.pre[l]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetRepr", into = "NetRepr")]
pub struct DenseNet {
    pub layers: Vec<Layer>,
    offsets: Vec<(Option<usize>, Option<usize>)>,
    n_params: usize,
}

#[derive(Clone, Serialize, Deserialize)]
struct NetRepr {
    layers: Vec<Layer>,
}

impl TryFrom<NetRepr> for DenseNet {
    type Error = Error;
    fn try_from(r: NetRepr) -> Result<Self> {
        DenseNet::new(r.layers)
    }
}

impl From<DenseNet> for NetRepr {
    fn from(net: DenseNet) -> NetRepr {
        NetRepr { layers: net.layers }
    }
}

impl DenseNet {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("layers", "network needs at least one layer"));
        }
        for (l, layer) in layers.iter().enumerate() {
            check_dim("layer weight", layer.out_dim * layer.in_dim, layer.weight.len())?;
            check_dim("layer bias", layer.out_dim, layer.bias.len())?;
            if l > 0 {
                check_dim("layer chaining", layers[l - 1].out_dim, layer.in_dim)?;
            }
        }
        let mut net = Self {
            layers,
            offsets: Vec::new(),
            n_params: 0,
        };
        net.refresh_layout();
        Ok(net)
    }

    /// Two hidden layers of width `hidden` with activation `hidden_act` and
    /// an output layer with `out_act`.
    pub fn two_hidden(
        input: usize,
        hidden: usize,
        output: usize,
        hidden_act: Activation,
        out_act: Activation,
    ) -> Self {
        Self::new(vec![
            Layer::new(input, hidden, hidden_act),
            Layer::new(hidden, hidden, hidden_act),
            Layer::new(hidden, output, out_act),
        ])
        .expect("consistent dimensions")
    }

    /// Three layers with possibly different hidden widths.
    pub fn two_hidden_widths(
        input: usize,
        first: usize,
        second: usize,
        output: usize,
        hidden_act: Activation,
        out_act: Activation,
    ) -> Self {
        Self::new(vec![
            Layer::new(input, first, hidden_act),
            Layer::new(first, second, hidden_act),
            Layer::new(second, output, out_act),
        ])
        .expect("consistent dimensions")
    }

    /// `tanh(K relu(C z + b))` with a fixed random input matrix `C` and no
    /// output bias. Trainable: `b` and `K`.
    pub fn random_feature(input: usize, hidden: usize, output: usize) -> Self {
        Self::new(vec![
            Layer::new(input, hidden, Activation::Relu).fixed_weight(),
            Layer::new(hidden, output, Activation::Tanh).without_bias(),
        ])
        .expect("consistent dimensions")
    }

    fn refresh_layout(&mut self) {
        let mut offset = 0;
        let mut bias_off = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            if layer.bias_trainable {
                bias_off.push(Some(offset));
                offset += layer.out_dim;
            } else {
                bias_off.push(None);
            }
        }
        let mut weight_off = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            if layer.weight_trainable {
                weight_off.push(Some(offset));
                offset += layer.weight.len();
            } else {
                weight_off.push(None);
            }
        }
        self.offsets = bias_off.into_iter().zip(weight_off).collect();
        self.n_params = offset;
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.out_dim).unwrap_or(0)
    }

    /// Number of trainable parameters.
    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn frozen_mask(&self) -> Vec<bool> {
        self.layers.iter().map(Layer::is_frozen).collect()
    }

    pub fn has_trainable(&self) -> bool {
        self.n_params > 0
    }

    /// Marks every layer as fixed.
    pub fn freeze(&mut self) {
        for layer in &mut self.layers {
            layer.weight_trainable = false;
            layer.bias_trainable = false;
        }
        self.refresh_layout();
    }

    pub fn set_trainable(&mut self, layer: usize, weight: bool, bias: bool) {
        self.layers[layer].weight_trainable = weight;
        self.layers[layer].bias_trainable = bias;
        self.refresh_layout();
    }

    /// Glorot-uniform trainable weights, standard-normal fixed weights and
    /// zero biases.
    pub fn init_params(&mut self, rng: &mut SeededRng) {
        for layer in &mut self.layers {
            if layer.weight_trainable {
                let limit = (6.0 / (layer.in_dim + layer.out_dim) as f64).sqrt();
                for w in &mut layer.weight {
                    *w = rng.uniform_range(-limit, limit);
                }
            } else {
                rng.fill_gauss(&mut layer.weight);
            }
            layer.bias.iter_mut().for_each(|b| *b = 0.0);
        }
    }

    /// Forward pass into a reusable tape; returns the network output.
    pub fn forward_with<'t>(&self, input: &[f64], tape: &'t mut Tape) -> &'t [f64] {
        debug_assert_eq!(input.len(), self.input_dim());
        tape.fit(self);
        tape.acts[0].copy_from_slice(input);
        for (l, layer) in self.layers.iter().enumerate() {
            let (head, tail) = tape.acts.split_at_mut(l + 1);
            layer.forward_into(&head[l], &mut tape.pre[l], &mut tail[0]);
        }
        tape.output()
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, Tape)> {
        check_dim("network input", self.input_dim(), input.len())?;
        let mut tape = Tape::new();
        let out = self.forward_with(input, &mut tape).to_vec();
        Ok((out, tape))
    }

    /// Output only.
    pub fn predict(&self, input: &[f64], tape: &mut Tape) -> Vec<f64> {
        self.forward_with(input, tape).to_vec()
    }

    /// Reverse pass for the tape of the last [`forward_with`](Self::forward_with).
    /// Adds `∂(upstream · output)/∂θ` into `param_grad` and, when given,
    /// writes the input gradient into `input_grad`.
    pub fn backward_accumulate(
        &self,
        tape: &mut Tape,
        upstream: &[f64],
        param_grad: &mut [f64],
        input_grad: Option<&mut [f64]>,
    ) {
        debug_assert_eq!(upstream.len(), self.output_dim());
        debug_assert_eq!(param_grad.len(), self.n_params);
        let Tape {
            acts,
            pre,
            delta,
            upstream: up,
            ..
        } = tape;
        up[..upstream.len()].copy_from_slice(upstream);
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let (bias_off, weight_off) = self.offsets[l];
            let out = &acts[l + 1];
            let input = &acts[l];
            for o in 0..layer.out_dim {
                delta[o] = up[o] * layer.activation.derivative(pre[l][o], out[o]);
            }
            if let Some(off) = bias_off {
                for o in 0..layer.out_dim {
                    param_grad[off + o] += delta[o];
                }
            }
            if let Some(off) = weight_off {
                for o in 0..layer.out_dim {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    let row = &mut param_grad[off + o * layer.in_dim..off + (o + 1) * layer.in_dim];
                    for (g, x) in row.iter_mut().zip(input.iter()) {
                        *g += d * x;
                    }
                }
            }
            if l == 0 && input_grad.is_none() {
                break;
            }
            for i in 0..layer.in_dim {
                let mut acc = 0.0;
                for o in 0..layer.out_dim {
                    acc += layer.weight[o * layer.in_dim + i] * delta[o];
                }
                up[i] = acc;
            }
        }
        if let Some(ig) = input_grad {
            ig.copy_from_slice(&up[..self.input_dim()]);
        }
    }

    /// Parameter and input gradients of `upstream · output`.
    pub fn backward(&self, tape: &Tape, upstream: &[f64]) -> Result<(ParamView, Vec<f64>)> {
        let shape: Vec<usize> = std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.out_dim))
            .collect();
        if tape.shape != shape {
            return Err(Error::invalid("tape", "tape was not produced by this network"));
        }
        check_dim("upstream gradient", self.output_dim(), upstream.len())?;
        let mut tape = tape.clone();
        let mut grad = vec![0.0; self.n_params];
        let mut input_grad = vec![0.0; self.input_dim()];
        self.backward_accumulate(&mut tape, upstream, &mut grad, Some(&mut input_grad));
        Ok((ParamView::new(grad, self.layout()), input_grad))
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::of(self)
    }

    pub(crate) fn offsets(&self) -> &[(Option<usize>, Option<usize>)] {
        &self.offsets
    }

    /// Trainable parameters as a flat vector.
    pub fn params(&self) -> Vec<f64> {
        let mut flat = vec![0.0; self.n_params];
        self.write_params(&mut flat);
        flat
    }

    pub fn write_params(&self, flat: &mut [f64]) {
        debug_assert_eq!(flat.len(), self.n_params);
        for (layer, &(b, w)) in self.layers.iter().zip(&self.offsets) {
            if let Some(off) = b {
                flat[off..off + layer.out_dim].copy_from_slice(&layer.bias);
            }
            if let Some(off) = w {
                flat[off..off + layer.weight.len()].copy_from_slice(&layer.weight);
            }
        }
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_params, "flat parameter length");
        let offsets = self.offsets.clone();
        for (layer, (b, w)) in self.layers.iter_mut().zip(offsets) {
            if let Some(off) = b {
                layer.bias.copy_from_slice(&flat[off..off + layer.out_dim]);
            }
            if let Some(off) = w {
                let n = layer.weight.len();
                layer.weight.copy_from_slice(&flat[off..off + n]);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_with_tanh_output_is_zero() {
        let net = DenseNet::two_hidden(3, 4, 2, Activation::Relu, Activation::Tanh);
        let (out, _) = net.forward(&[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn relu_unit() {
        let mut net = DenseNet::new(vec![Layer::new(1, 1, Activation::Relu)]).unwrap();
        net.layers[0].weight[0] = 1.0;
        assert_eq!(net.forward(&[-3.0]).unwrap().0, vec![0.0]);
        assert_eq!(net.forward(&[3.0]).unwrap().0, vec![3.0]);
    }

    #[test]
    fn sigmoid_hidden_layers_at_zero() {
        let net = DenseNet::two_hidden(1, 3, 2, Activation::Sigmoid, Activation::Tanh);
        let (out, tape) = net.forward(&[0.0]).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
        assert!(tape.acts[1].iter().chain(&tape.acts[2]).all(|v| *v == 0.5));
    }

    #[test]
    fn linear_backward() {
        let mut net = DenseNet::new(vec![Layer::new(1, 1, Activation::Identity)]).unwrap();
        net.set_params(&[0.3, 2.0]);
        let (_, tape) = net.forward(&[1.7]).unwrap();
        let (grad, input_grad) = net.backward(&tape, &[1.0]).unwrap();
        // bias first, then weight
        assert_eq!(grad.flat, vec![1.0, 1.7]);
        assert_eq!(input_grad, vec![2.0]);
        let (grad, _) = net.backward(&tape, &[0.0]).unwrap();
        assert!(grad.flat.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn mismatches_are_errors() {
        let net = DenseNet::two_hidden(2, 3, 1, Activation::Tanh, Activation::Identity);
        assert!(net.forward(&[1.0]).is_err());
        let other = DenseNet::two_hidden(2, 4, 1, Activation::Tanh, Activation::Identity);
        let (_, tape) = other.forward(&[1.0, 1.0]).unwrap();
        assert!(net.backward(&tape, &[1.0]).is_err());
        assert!(DenseNet::new(vec![Layer::new(2, 3, Activation::Relu), Layer::new(2, 1, Activation::Relu)]).is_err());
    }

    #[test]
    fn parameter_counts() {
        // ν(d_s + ν + p + 2) + p with p=5, ν=1, d_s=1
        let net = DenseNet::two_hidden(1, 1, 5, Activation::Relu, Activation::Tanh);
        assert_eq!(net.n_params(), 14);
        // ν(p + 1)
        let net = DenseNet::random_feature(1, 1, 5);
        assert_eq!(net.n_params(), 6);
        // d1(m + d2 + 1) + 2 d2 + 1
        let net = DenseNet::two_hidden_widths(4, 7, 5, 1, Activation::LeakyRelu, Activation::Identity);
        assert_eq!(net.n_params(), 7 * (4 + 5 + 1) + 2 * 5 + 1);
    }

    #[test]
    fn init_scheme() {
        let mut net = DenseNet::new(vec![Layer::new(200, 300, Activation::Tanh)]).unwrap();
        net.layers[0].bias.iter_mut().for_each(|b| *b = 1.0);
        net.init_params(&mut SeededRng::new(3));
        assert!(net.layers[0].bias.iter().all(|b| *b == 0.0));
        let w = &net.layers[0].weight;
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / w.len() as f64;
        let target = 2.0 / 500.0;
        assert!((var / target - 1.0).abs() < 0.05, "{var}");

        let mut rf = DenseNet::random_feature(100, 100, 1);
        rf.init_params(&mut SeededRng::new(4));
        let c = &rf.layers[0].weight;
        let mean = c.iter().sum::<f64>() / c.len() as f64;
        let var = c.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / c.len() as f64;
        assert!(mean.abs() < 0.03 && (var - 1.0).abs() < 0.05, "{mean} {var}");
    }

    #[test]
    fn frozen_layers_emit_no_gradient_but_propagate() {
        let mut net = DenseNet::two_hidden(2, 3, 1, Activation::Tanh, Activation::Identity);
        net.init_params(&mut SeededRng::new(5));
        net.set_trainable(1, false, false);
        assert_eq!(net.frozen_mask(), vec![false, true, false]);
        assert_eq!(net.n_params(), 3 + 1 + 6 + 3);
        let (_, tape) = net.forward(&[0.3, -0.2]).unwrap();
        let (grad, input_grad) = net.backward(&tape, &[1.0]).unwrap();
        assert!(grad.flat.iter().any(|g| *g != 0.0));
        assert!(input_grad.iter().any(|g| *g != 0.0));
        net.freeze();
        assert_eq!(net.n_params(), 0);
        assert!(!net.has_trainable());
    }
}
