//! Central finite differences for checking hand-written gradients.

use super::{DenseNet, Tape};

/// Central difference of `f` at `x` with step `h` in every coordinate.
pub fn central_difference<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let dn = f(&probe);
            probe[i] = orig;
            (up - dn) / (2.0 * h)
        })
        .collect()
}

/// Fourth-order central difference, for checks where truncation error of
/// the two-point rule would dominate.
pub fn central_difference4<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            let mut at = |d: f64| {
                probe[i] = orig + d;
                f(&probe)
            };
            let v = -at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h);
            probe[i] = orig;
            v / (12.0 * h)
        })
        .collect()
}

/// `|a − n| / max(|a| + |n|, 1e-5)`. A central difference with step 1e-5
/// on an O(1) function carries roundoff near 1e-11, so components much
/// smaller than the floor cannot be resolved and are compared absolutely.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-5)
}

pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| relative_error(*a, *n))
        .fold(0.0, f64::max)
}

/// Smallest |pre-activation| over kinked units; probes closer than a few
/// finite-difference steps to a kink are not meaningful.
pub fn kink_distance(net: &DenseNet, input: &[f64]) -> f64 {
    let mut tape = Tape::new();
    net.forward_with(input, &mut tape);
    net.layers
        .iter()
        .enumerate()
        .filter(|(_, l)| l.activation.is_piecewise_linear())
        .flat_map(|(i, _)| tape.pre_activation(i).iter().map(|v| v.abs()).collect::<Vec<_>>())
        .fold(f64::INFINITY, f64::min)
}

/// Worst relative error of backprop against finite differences for the
/// scalar `upstream · net(input)`, over trainable parameters and inputs.
pub fn network_gradient_error(net: &DenseNet, input: &[f64], upstream: &[f64], h: f64) -> f64 {
    let scalar = |n: &DenseNet, x: &[f64]| -> f64 {
        let mut tape = Tape::new();
        n.forward_with(x, &mut tape)
            .iter()
            .zip(upstream)
            .map(|(o, u)| o * u)
            .sum()
    };
    let (_, tape) = net.forward(input).expect("input dimension");
    let (grad, input_grad) = net.backward(&tape, upstream).expect("matching tape");

    let theta = net.params();
    let mut probe = net.clone();
    let fd_params = central_difference(
        |p| {
            probe.set_params(p);
            scalar(&probe, input)
        },
        &theta,
        h,
    );
    let fd_input = central_difference(|x| scalar(net, x), input, h);
    max_relative_error(&grad.flat, &fd_params).max(max_relative_error(&input_grad, &fd_input))
}
