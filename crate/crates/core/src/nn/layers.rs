//! Forward and backward passes of the individual layer kinds.
//!
//! Sequences are `(len, features)` tensors, dense activations are vectors.
//! Every `*_backward` accumulates parameter gradients into the slices it is
//! given (so a minibatch can sum into one buffer) and returns the gradient
//! with respect to the layer input.

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Linear,
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Linear => x,
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the pre-activation `x` and output `y`.
    /// The ReLU kink at 0 gets derivative 0.
    #[inline]
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn expect_shape(what: &str, t: &Tensor, shape: &[usize]) -> Result<()> {
    if t.shape() != shape {
        return Err(Error::Shape(format!("{what}: expected {shape:?}, got {:?}", t.shape())));
    }
    Ok(())
}

fn sequence_dims(what: &str, input: &Tensor) -> Result<(usize, usize)> {
    match input.shape() {
        [l, c] => Ok((*l, *c)),
        other => Err(Error::Shape(format!("{what}: expected a (len, features) sequence, got {other:?}"))),
    }
}

// ---------------------------------------------------------------- conv1d

/// Valid, stride-1 convolution: `out[t, f] = act(sum_{j<k, c} w[f, j, c] * in[t + j, c] + b[f])`.
/// Weights are `(filters, kernel, in_features)`.
pub fn conv1d_forward(
    input: &Tensor,
    weights: &Tensor,
    biases: &Tensor,
    activation: Activation,
) -> Result<(Tensor, Vec<f64>)> {
    let (l, c) = sequence_dims("conv1d", input)?;
    let [filters, k, wc] = weights.shape() else {
        return Err(Error::Shape(format!("conv1d weights must be 3-D, got {:?}", weights.shape())));
    };
    let (filters, k) = (*filters, *k);
    if *wc != c {
        return Err(Error::Shape(format!("conv1d: input has {c} features, kernel expects {wc}")));
    }
    expect_shape("conv1d biases", biases, &[filters])?;
    if l < k {
        return Err(Error::Shape(format!("conv1d: sequence length {l} < kernel size {k}")));
    }
    let out_len = l - k + 1;
    let x = input.data();
    let w = weights.data();
    let mut pre = vec![0.0; out_len * filters];
    for t in 0..out_len {
        let patch = &x[t * c..(t + k) * c];
        let row = &mut pre[t * filters..(t + 1) * filters];
        for (f, out) in row.iter_mut().enumerate() {
            let wf = &w[f * k * c..(f + 1) * k * c];
            *out = biases.data()[f] + dot(wf, patch);
        }
    }
    let out = pre.iter().map(|&v| activation.apply(v)).collect();
    Ok((Tensor::matrix(out_len, filters, out)?, pre))
}

/// ReLU convolution, the configuration used by the CNN regressor.
pub fn conv1d_apply(input: &Tensor, weights: &Tensor, biases: &Tensor) -> Result<Tensor> {
    conv1d_forward(input, weights, biases, Activation::Relu).map(|(out, _)| out)
}

#[allow(clippy::too_many_arguments)]
pub fn conv1d_backward(
    input: &Tensor,
    weights: &Tensor,
    pre: &[f64],
    output: &Tensor,
    activation: Activation,
    grad_out: &Tensor,
    grad_w: &mut [f64],
    grad_b: &mut [f64],
) -> Tensor {
    let (l, c) = input.dims2();
    let filters = weights.shape()[0];
    let k = weights.shape()[1];
    let out_len = l - k + 1;
    let x = input.data();
    let w = weights.data();
    let y = output.data();
    let g = grad_out.data();
    let mut grad_in = vec![0.0; l * c];
    for t in 0..out_len {
        let patch = &x[t * c..(t + k) * c];
        for f in 0..filters {
            let idx = t * filters + f;
            let d = g[idx] * activation.derivative(pre[idx], y[idx]);
            if d == 0.0 {
                continue;
            }
            grad_b[f] += d;
            let gw = &mut grad_w[f * k * c..(f + 1) * k * c];
            axpy(d, patch, gw);
            let wf = &w[f * k * c..(f + 1) * k * c];
            axpy(d, wf, &mut grad_in[t * c..(t + k) * c]);
        }
    }
    Tensor::matrix(l, c, grad_in).expect("shape computed from input")
}

// ------------------------------------------------------------- maxpool1d

/// Non-overlapping max pooling along time; a trailing partial window is
/// dropped. Returns the output and, per output cell, the input row that won
/// (the first one on ties).
pub fn maxpool1d_forward(input: &Tensor, pool: usize) -> Result<(Tensor, Vec<usize>)> {
    let (l, c) = sequence_dims("maxpool1d", input)?;
    if pool == 0 {
        return Err(Error::Shape("pool size must be >= 1".into()));
    }
    let out_len = l / pool;
    if out_len == 0 {
        return Err(Error::Shape(format!("maxpool1d: sequence length {l} < pool size {pool}")));
    }
    let x = input.data();
    let mut out = vec![0.0; out_len * c];
    let mut argmax = vec![0usize; out_len * c];
    for t in 0..out_len {
        for f in 0..c {
            let mut best = t * pool;
            for r in t * pool + 1..(t + 1) * pool {
                if x[r * c + f] > x[best * c + f] {
                    best = r;
                }
            }
            out[t * c + f] = x[best * c + f];
            argmax[t * c + f] = best;
        }
    }
    Ok((Tensor::matrix(out_len, c, out)?, argmax))
}

pub fn maxpool1d_apply(input: &Tensor, pool: usize) -> Result<Tensor> {
    maxpool1d_forward(input, pool).map(|(out, _)| out)
}

pub fn maxpool1d_backward(input_shape: &[usize], argmax: &[usize], grad_out: &Tensor) -> Tensor {
    let (l, c) = (input_shape[0], input_shape[1]);
    let mut grad_in = vec![0.0; l * c];
    for (idx, &g) in grad_out.data().iter().enumerate() {
        let f = idx % c;
        grad_in[argmax[idx] * c + f] += g;
    }
    Tensor::matrix(l, c, grad_in).expect("shape computed from input")
}

// ----------------------------------------------------------------- dense

/// `act(W x + b)` with `W` shaped `(units, inputs)`.
pub fn dense_forward(
    input: &Tensor,
    weights: &Tensor,
    biases: &Tensor,
    activation: Activation,
) -> Result<(Tensor, Vec<f64>)> {
    let [units, n] = weights.shape() else {
        return Err(Error::Shape(format!("dense weights must be 2-D, got {:?}", weights.shape())));
    };
    let (units, n) = (*units, *n);
    if input.shape() != [n] {
        return Err(Error::Shape(format!(
            "dense: expected a vector of {n} features, got {:?}",
            input.shape()
        )));
    }
    expect_shape("dense biases", biases, &[units])?;
    let x = input.data();
    let w = weights.data();
    let pre: Vec<f64> = (0..units)
        .map(|u| biases.data()[u] + dot(&w[u * n..(u + 1) * n], x))
        .collect();
    let out = pre.iter().map(|&v| activation.apply(v)).collect();
    Ok((Tensor::vector(out), pre))
}

pub fn dense_apply(input: &Tensor, weights: &Tensor, biases: &Tensor, activation: Activation) -> Result<Tensor> {
    dense_forward(input, weights, biases, activation).map(|(out, _)| out)
}

#[allow(clippy::too_many_arguments)]
pub fn dense_backward(
    input: &Tensor,
    weights: &Tensor,
    pre: &[f64],
    output: &Tensor,
    activation: Activation,
    grad_out: &Tensor,
    grad_w: &mut [f64],
    grad_b: &mut [f64],
) -> Tensor {
    let n = input.len();
    let x = input.data();
    let w = weights.data();
    let mut grad_in = vec![0.0; n];
    for (u, (&g, (&p, &y))) in grad_out.data().iter().zip(pre.iter().zip(output.data())).enumerate() {
        let d = g * activation.derivative(p, y);
        if d == 0.0 {
            continue;
        }
        grad_b[u] += d;
        axpy(d, x, &mut grad_w[u * n..(u + 1) * n]);
        axpy(d, &w[u * n..(u + 1) * n], &mut grad_in);
    }
    Tensor::vector(grad_in)
}

// ------------------------------------------------------------------ lstm

/// Parameters of one LSTM direction. Gate blocks are stacked in the order
/// input, forget, candidate, output: `kernel` is `(4u, in_features)`,
/// `recurrent` is `(4u, u)` and `bias` is `(4u,)`.
#[derive(Debug, Clone, Copy)]
pub struct LstmParams<'a> {
    pub kernel: &'a Tensor,
    pub recurrent: &'a Tensor,
    pub bias: &'a Tensor,
}

impl LstmParams<'_> {
    fn units(&self) -> usize {
        self.recurrent.shape()[1]
    }

    fn check(&self, features: usize) -> Result<usize> {
        let u = self.recurrent.shape().get(1).copied().unwrap_or(0);
        expect_shape("lstm recurrent kernel", self.recurrent, &[4 * u, u])?;
        expect_shape("lstm kernel", self.kernel, &[4 * u, features])?;
        expect_shape("lstm bias", self.bias, &[4 * u])?;
        if u == 0 {
            return Err(Error::Shape("lstm needs at least one unit".into()));
        }
        Ok(u)
    }
}

/// Per-step activations kept for backpropagation through time.
#[derive(Debug, Clone)]
pub struct LstmCache {
    /// `(len, 4u)` post-activation gates i, f, g, o.
    pub gates: Vec<f64>,
    /// `(len, u)` cell states.
    pub cells: Vec<f64>,
    /// `(len, u)` tanh of the cell states.
    pub cells_tanh: Vec<f64>,
    /// `(len, u)` hidden states.
    pub hidden: Vec<f64>,
}

impl LstmCache {
    pub(crate) fn size_bytes(&self) -> usize {
        (self.gates.len() + self.cells.len() + self.cells_tanh.len() + self.hidden.len())
            * std::mem::size_of::<f64>()
    }
}

/// Runs the recurrence from zero hidden and cell state:
///
/// ```text
/// i, f, o = sigmoid(.)   g = tanh(.)   of  W x_t + U h_{t-1} + b
/// c_t = f * c_{t-1} + i * g
/// h_t = o * tanh(c_t)
/// ```
///
/// Returns `h_len` as a vector, or every `h_t` as a `(len, u)` sequence when
/// `return_sequences` is set.
pub fn lstm_forward(input: &Tensor, params: LstmParams<'_>, return_sequences: bool) -> Result<(Tensor, LstmCache)> {
    let (l, d) = sequence_dims("lstm", input)?;
    let u = params.check(d)?;
    if l == 0 {
        return Err(Error::Shape("lstm: empty sequence".into()));
    }
    let x = input.data();
    let wk = params.kernel.data();
    let wr = params.recurrent.data();
    let b = params.bias.data();
    let mut cache = LstmCache {
        gates: vec![0.0; l * 4 * u],
        cells: vec![0.0; l * u],
        cells_tanh: vec![0.0; l * u],
        hidden: vec![0.0; l * u],
    };
    let mut z = vec![0.0; 4 * u];
    let zero = vec![0.0; u];
    for t in 0..l {
        let xt = &x[t * d..(t + 1) * d];
        let (h_prev, c_prev) = if t == 0 {
            (&zero[..], &zero[..])
        } else {
            (&cache.hidden[(t - 1) * u..t * u], &cache.cells[(t - 1) * u..t * u])
        };
        for (r, zr) in z.iter_mut().enumerate() {
            *zr = b[r] + dot(&wk[r * d..(r + 1) * d], xt) + dot(&wr[r * u..(r + 1) * u], h_prev);
        }
        let mut c_new = vec![0.0; u];
        let gates = &mut cache.gates[t * 4 * u..(t + 1) * 4 * u];
        for j in 0..u {
            let i = sigmoid(z[j]);
            let f = sigmoid(z[u + j]);
            let g = z[2 * u + j].tanh();
            let o = sigmoid(z[3 * u + j]);
            gates[j] = i;
            gates[u + j] = f;
            gates[2 * u + j] = g;
            gates[3 * u + j] = o;
            c_new[j] = f * c_prev[j] + i * g;
        }
        for j in 0..u {
            let tc = c_new[j].tanh();
            cache.cells[t * u + j] = c_new[j];
            cache.cells_tanh[t * u + j] = tc;
            cache.hidden[t * u + j] = gates[3 * u + j] * tc;
        }
    }
    let out = if return_sequences {
        Tensor::matrix(l, u, cache.hidden.clone())?
    } else {
        Tensor::vector(cache.hidden[(l - 1) * u..].to_vec())
    };
    Ok((out, cache))
}

/// Final hidden state of a single LSTM pass.
pub fn lstm_apply(input: &Tensor, params: LstmParams<'_>) -> Result<Tensor> {
    lstm_forward(input, params, false).map(|(out, _)| out)
}

/// Gradient buffers of one LSTM direction, laid out like [`LstmParams`].
pub struct LstmGrads<'a> {
    pub kernel: &'a mut [f64],
    pub recurrent: &'a mut [f64],
    pub bias: &'a mut [f64],
}

/// Backpropagation through time. `grad_out` is `(u,)` for the last state
/// or `(len, u)` when the forward pass returned sequences.
pub fn lstm_backward(
    input: &Tensor,
    params: LstmParams<'_>,
    cache: &LstmCache,
    grad_out: &Tensor,
    grads: LstmGrads<'_>,
) -> Tensor {
    let (l, d) = input.dims2();
    let u = params.units();
    let x = input.data();
    let wk = params.kernel.data();
    let wr = params.recurrent.data();
    let per_step = grad_out.len() == l * u && grad_out.shape().len() == 2;
    let go = grad_out.data();

    let mut grad_in = vec![0.0; l * d];
    let mut dh_next = vec![0.0; u];
    let mut dc_next = vec![0.0; u];
    let mut dz = vec![0.0; 4 * u];
    let zero = vec![0.0; u];
    for t in (0..l).rev() {
        let gates = &cache.gates[t * 4 * u..(t + 1) * 4 * u];
        let tc = &cache.cells_tanh[t * u..(t + 1) * u];
        let c_prev = if t == 0 { &zero[..] } else { &cache.cells[(t - 1) * u..t * u] };
        let h_prev = if t == 0 { &zero[..] } else { &cache.hidden[(t - 1) * u..t * u] };
        for j in 0..u {
            let mut dh = dh_next[j];
            if per_step {
                dh += go[t * u + j];
            } else if t == l - 1 {
                dh += go[j];
            }
            let (i, f, g, o) = (gates[j], gates[u + j], gates[2 * u + j], gates[3 * u + j]);
            let d_o = dh * tc[j];
            let dc = dh * o * (1.0 - tc[j] * tc[j]) + dc_next[j];
            dz[j] = dc * g * i * (1.0 - i);
            dz[u + j] = dc * c_prev[j] * f * (1.0 - f);
            dz[2 * u + j] = dc * i * (1.0 - g * g);
            dz[3 * u + j] = d_o * o * (1.0 - o);
            dc_next[j] = dc * f;
        }
        dh_next.fill(0.0);
        let xt = &x[t * d..(t + 1) * d];
        let gx = &mut grad_in[t * d..(t + 1) * d];
        for (r, &dzr) in dz.iter().enumerate() {
            if dzr == 0.0 {
                continue;
            }
            grads.bias[r] += dzr;
            axpy(dzr, xt, &mut grads.kernel[r * d..(r + 1) * d]);
            axpy(dzr, h_prev, &mut grads.recurrent[r * u..(r + 1) * u]);
            axpy(dzr, &wk[r * d..(r + 1) * d], gx);
            axpy(dzr, &wr[r * u..(r + 1) * u], &mut dh_next);
        }
    }
    Tensor::matrix(l, d, grad_in).expect("shape computed from input")
}

// ---------------------------------------------------------------- bilstm

pub(crate) fn reversed(input: &Tensor) -> Tensor {
    let (l, d) = input.dims2();
    let x = input.data();
    let data = (0..l).rev().flat_map(|t| x[t * d..(t + 1) * d].iter().copied()).collect();
    Tensor::matrix(l, d, data).expect("same shape")
}

#[derive(Debug, Clone)]
pub struct BiLstmCache {
    pub forward: LstmCache,
    pub backward: LstmCache,
    pub reversed_input: Tensor,
}

/// Forward pass over the sequence and an independent pass over the reversed
/// sequence, outputs concatenated `(forward || backward)`.
///
/// Without `return_sequences` the result is `(2u,)`: the last forward state
/// and the backward state after consuming `x_1`. With it, row `t` holds the
/// forward state after `x_t` and the backward state after `x_t` (which has
/// seen `x_t ..= x_len`).
pub fn bilstm_forward(
    input: &Tensor,
    forward: LstmParams<'_>,
    backward: LstmParams<'_>,
    return_sequences: bool,
) -> Result<(Tensor, BiLstmCache)> {
    let (l, _) = sequence_dims("bilstm", input)?;
    let rev = reversed(input);
    let (fo, fc) = lstm_forward(input, forward, return_sequences)?;
    let (bo, bc) = lstm_forward(&rev, backward, return_sequences)?;
    let out = if return_sequences {
        let (uf, ub) = (fo.dims2().1, bo.dims2().1);
        let mut data = Vec::with_capacity(l * (uf + ub));
        for t in 0..l {
            data.extend_from_slice(&fo.data()[t * uf..(t + 1) * uf]);
            data.extend_from_slice(&bo.data()[(l - 1 - t) * ub..(l - t) * ub]);
        }
        Tensor::matrix(l, uf + ub, data)?
    } else {
        let mut data = fo.into_data();
        data.extend_from_slice(bo.data());
        Tensor::vector(data)
    };
    Ok((out, BiLstmCache { forward: fc, backward: bc, reversed_input: rev }))
}

pub fn bilstm_apply(input: &Tensor, forward: LstmParams<'_>, backward: LstmParams<'_>) -> Result<Tensor> {
    bilstm_forward(input, forward, backward, false).map(|(out, _)| out)
}

pub fn bilstm_backward(
    input: &Tensor,
    forward: LstmParams<'_>,
    backward: LstmParams<'_>,
    cache: &BiLstmCache,
    grad_out: &Tensor,
    grads_forward: LstmGrads<'_>,
    grads_backward: LstmGrads<'_>,
) -> Tensor {
    let (l, d) = input.dims2();
    let (uf, ub) = (forward.units(), backward.units());
    let go = grad_out.data();
    let (gf, gb) = if grad_out.shape().len() == 2 {
        let mut gf = Vec::with_capacity(l * uf);
        let mut gb = vec![0.0; l * ub];
        for t in 0..l {
            let row = &go[t * (uf + ub)..(t + 1) * (uf + ub)];
            gf.extend_from_slice(&row[..uf]);
            gb[(l - 1 - t) * ub..(l - t) * ub].copy_from_slice(&row[uf..]);
        }
        (Tensor::matrix(l, uf, gf).unwrap(), Tensor::matrix(l, ub, gb).unwrap())
    } else {
        (Tensor::vector(go[..uf].to_vec()), Tensor::vector(go[uf..].to_vec()))
    };
    let dx_f = lstm_backward(input, forward, &cache.forward, &gf, grads_forward);
    let dx_rev = lstm_backward(&cache.reversed_input, backward, &cache.backward, &gb, grads_backward);
    let mut grad_in = dx_f.into_data();
    let rev = dx_rev.data();
    for t in 0..l {
        for c in 0..d {
            grad_in[t * d + c] += rev[(l - 1 - t) * d + c];
        }
    }
    Tensor::matrix(l, d, grad_in).expect("shape computed from input")
}

// --------------------------------------------------------------- helpers

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(v: &[f64]) -> Tensor {
        Tensor::sequence(v.to_vec())
    }

    #[test]
    fn conv1d_identity_kernel_is_relu() {
        let w = Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap();
        let b = Tensor::vector(vec![0.0]);
        let out = conv1d_apply(&seq(&[-1.0, 2.0]), &w, &b).unwrap();
        assert_eq!(out.data(), &[0.0, 2.0]);
    }

    #[test]
    fn conv1d_hand_convolution() {
        let w = Tensor::new(vec![1, 2, 1], vec![1.0, 1.0]).unwrap();
        let b = Tensor::vector(vec![0.0]);
        let (_, pre) = conv1d_forward(&seq(&[1.0, 0.0, 1.0, 1.0]), &w, &b, Activation::Relu).unwrap();
        assert_eq!(pre, vec![1.0, 1.0, 2.0]);
    }

    #[test]
    fn conv1d_short_input() {
        let w = Tensor::new(vec![2, 3, 1], vec![0.0; 6]).unwrap();
        let b = Tensor::vector(vec![0.0; 2]);
        assert!(matches!(conv1d_apply(&seq(&[1.0, 1.0]), &w, &b), Err(Error::Shape(_))));
    }

    #[test]
    fn maxpool_examples() {
        let out = maxpool1d_apply(&seq(&[3.0, 1.0, 4.0, 1.0]), 2).unwrap();
        assert_eq!(out.data(), &[3.0, 4.0]);
        let x = seq(&[3.0, 1.0, 4.0, 1.0, 5.0]);
        assert_eq!(maxpool1d_apply(&x, 1).unwrap(), x);
        assert_eq!(maxpool1d_apply(&x, 2).unwrap().data(), &[3.0, 4.0]);
    }

    #[test]
    fn maxpool_gradient_goes_to_first_max() {
        let x = seq(&[2.0, 2.0, 0.0, 5.0]);
        let (_, argmax) = maxpool1d_forward(&x, 2).unwrap();
        let g = maxpool1d_backward(&[4, 1], &argmax, &seq(&[1.0, 1.0]));
        assert_eq!(g.data(), &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn dense_examples() {
        let eye = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let zero = Tensor::vector(vec![0.0, 0.0]);
        let x = Tensor::vector(vec![0.3, -0.7]);
        assert_eq!(dense_apply(&x, &eye, &zero, Activation::Linear).unwrap(), x);

        let w = Tensor::matrix(1, 2, vec![1.0, -1.0]).unwrap();
        let b = Tensor::vector(vec![0.5]);
        let (out, pre) = dense_forward(&Tensor::vector(vec![0.2, 1.0]), &w, &b, Activation::Relu).unwrap();
        assert!((pre[0] + 0.3).abs() < 1e-15);
        assert_eq!(out.data(), &[0.0]);
        assert!(dense_apply(&Tensor::vector(vec![1.0]), &w, &b, Activation::Relu).is_err());
    }

    fn lstm_zero(u: usize, d: usize) -> (Tensor, Tensor, Tensor) {
        (Tensor::zeros(&[4 * u, d]), Tensor::zeros(&[4 * u, u]), Tensor::zeros(&[4 * u]))
    }

    #[test]
    fn lstm_zero_parameters_give_zero_state() {
        let (k, r, b) = lstm_zero(3, 1);
        let p = LstmParams { kernel: &k, recurrent: &r, bias: &b };
        let out = lstm_apply(&seq(&[1.0, 0.0, 1.0, 1.0]), p).unwrap();
        assert_eq!(out.data(), &[0.0; 3]);
    }

    #[test]
    fn lstm_single_step_closed_form() {
        // One unit, one feature: z = w * x + b per gate.
        let k = Tensor::matrix(4, 1, vec![0.5, -0.3, 0.8, 1.2]).unwrap();
        let r = Tensor::matrix(4, 1, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let b = Tensor::vector(vec![0.0, 1.0, -0.2, 0.1]);
        let x = 0.7;
        let s = |v: f64| 1.0 / (1.0 + (-v).exp());
        let i = s(0.5 * x);
        let g = (0.8 * x - 0.2f64).tanh();
        let o = s(1.2 * x + 0.1);
        let c = i * g;
        let expected = o * c.tanh();
        let p = LstmParams { kernel: &k, recurrent: &r, bias: &b };
        let out = lstm_apply(&seq(&[x]), p).unwrap();
        assert!((out.data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn bilstm_palindrome_symmetry() {
        let k = Tensor::matrix(8, 1, (0..8).map(|i| 0.1 * i as f64 - 0.3).collect()).unwrap();
        let r = Tensor::matrix(8, 2, (0..16).map(|i| 0.05 * i as f64 - 0.4).collect()).unwrap();
        let b = Tensor::vector(vec![0.1; 8]);
        let p = LstmParams { kernel: &k, recurrent: &r, bias: &b };
        let out = bilstm_apply(&seq(&[1.0, 0.0, 1.0, 1.0, 0.0, 1.0]), p, p).unwrap();
        assert_eq!(&out.data()[..2], &out.data()[2..]);
    }

    #[test]
    fn bilstm_zero_parameters() {
        let (k, r, b) = lstm_zero(2, 1);
        let p = LstmParams { kernel: &k, recurrent: &r, bias: &b };
        assert_eq!(bilstm_apply(&seq(&[1.0, 1.0]), p, p).unwrap().data(), &[0.0; 4]);
    }
}
