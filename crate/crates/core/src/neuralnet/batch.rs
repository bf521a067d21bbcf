use super::{leaky_relu, sigmoid, tanh, Activation, DenseNet};

/// Activations of one forward pass over `n` inputs, stored unit-major
/// (`acts[l][u * n + j]` is unit `u` of layer output `l` for input `j`).
#[derive(Clone, Debug, Default)]
pub struct BatchTape {
    n: usize,
    acts: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    delta: Vec<f64>,
    up: Vec<f64>,
    next_up: Vec<f64>,
}

impl BatchTape {
    pub fn new() -> Self {
        Self::default()
    }

    fn fit(&mut self, net: &DenseNet, n: usize) {
        let layers = &net.layers;
        if self.n == n
            && self.acts.len() == layers.len() + 1
            && self.acts[0].len() == net.input_dim() * n
            && layers.iter().zip(&self.acts[1..]).all(|(l, a)| a.len() == l.out_dim * n)
        {
            return;
        }
        self.n = n;
        self.acts = std::iter::once(net.input_dim()).chain(layers.iter().map(|l| l.out_dim)).map(|d| vec![0.0; d * n]).collect();
        self.pre = layers.iter().map(|l| vec![0.0; l.out_dim * n]).collect();
        let widest = layers.iter().map(|l| l.out_dim.max(l.in_dim)).max().unwrap_or(0) * n;
        self.delta = vec![0.0; widest];
        self.up = vec![0.0; widest];
        self.next_up = vec![0.0; widest];
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Unit-major network output of the last forward pass.
    pub fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

fn activate(act: Activation, pre: &[f64], out: &mut [f64]) {
    match act {
        Activation::Identity => out.copy_from_slice(pre),
        Activation::Relu => out.iter_mut().zip(pre).for_each(|(o, p)| *o = p.max(0.0)),
        Activation::LeakyRelu => out.iter_mut().zip(pre).for_each(|(o, p)| *o = leaky_relu(*p)),
        Activation::Tanh => out.iter_mut().zip(pre).for_each(|(o, p)| *o = tanh(*p)),
        Activation::Sigmoid => out.iter_mut().zip(pre).for_each(|(o, p)| *o = sigmoid(*p)),
    }
}

impl DenseNet {
    /// Forward pass over `n` inputs given unit-major (`input[i * n + j]`).
    /// Returns the unit-major output.
    pub fn forward_batch<'t>(&self, input: &[f64], n: usize, tape: &'t mut BatchTape) -> &'t [f64] {
        debug_assert_eq!(input.len(), self.input_dim() * n);
        tape.fit(self, n);
        tape.acts[0].copy_from_slice(input);
        for (l, layer) in self.layers.iter().enumerate() {
            let (head, tail) = tape.acts.split_at_mut(l + 1);
            let x = &head[l];
            let pre = &mut tape.pre[l];
            for o in 0..layer.out_dim {
                let row = &mut pre[o * n..(o + 1) * n];
                row.fill(layer.bias[o]);
                for i in 0..layer.in_dim {
                    let w = layer.weight[o * layer.in_dim + i];
                    for (p, v) in row.iter_mut().zip(&x[i * n..(i + 1) * n]) {
                        *p += w * v;
                    }
                }
            }
            activate(layer.activation, pre, &mut tail[0]);
        }
        tape.output()
    }

    /// Reverse pass after [`forward_batch`](Self::forward_batch): adds
    /// `Σ_j ∂(upstream_j · output_j)/∂θ` into `param_grad` and, when given,
    /// writes the unit-major input gradients.
    pub fn backward_batch(&self, tape: &mut BatchTape, upstream: &[f64], param_grad: &mut [f64], input_grad: Option<&mut [f64]>) {
        let n = tape.n;
        debug_assert_eq!(upstream.len(), self.output_dim() * n);
        debug_assert_eq!(param_grad.len(), self.n_params());
        let BatchTape { acts, pre, delta, up, next_up, .. } = tape;
        up[..upstream.len()].copy_from_slice(upstream);
        let want_input = input_grad.is_some();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let (bias_off, weight_off) = self.offsets()[l];
            let out = &acts[l + 1];
            let x = &acts[l];
            let m = layer.out_dim * n;
            match layer.activation {
                Activation::Identity => delta[..m].copy_from_slice(&up[..m]),
                act => {
                    for k in 0..m {
                        delta[k] = up[k] * act.derivative(pre[l][k], out[k]);
                    }
                }
            }
            if let Some(off) = bias_off {
                for o in 0..layer.out_dim {
                    param_grad[off + o] += delta[o * n..(o + 1) * n].iter().sum::<f64>();
                }
            }
            if let Some(off) = weight_off {
                for o in 0..layer.out_dim {
                    let d = &delta[o * n..(o + 1) * n];
                    for i in 0..layer.in_dim {
                        let dot: f64 = d.iter().zip(&x[i * n..(i + 1) * n]).map(|(a, b)| a * b).sum();
                        param_grad[off + o * layer.in_dim + i] += dot;
                    }
                }
            }
            if l == 0 && !want_input {
                break;
            }
            let nu = &mut next_up[..layer.in_dim * n];
            nu.fill(0.0);
            for o in 0..layer.out_dim {
                let d = &delta[o * n..(o + 1) * n];
                for i in 0..layer.in_dim {
                    let w = layer.weight[o * layer.in_dim + i];
                    for (u, dv) in nu[i * n..(i + 1) * n].iter_mut().zip(d) {
                        *u += w * dv;
                    }
                }
            }
            std::mem::swap(up, next_up);
        }
        if let Some(ig) = input_grad {
            ig.copy_from_slice(&up[..self.input_dim() * n]);
        }
    }
}
