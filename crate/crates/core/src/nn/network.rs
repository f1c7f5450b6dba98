//! Sequential stacks of layers.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::layers::{
    self, Activation, BiLstmCache, LstmCache, LstmGrads, LstmParams,
};
use super::Tensor;
use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerSpec {
    Conv1d {
        filters: usize,
        kernel_size: usize,
        #[serde(default)]
        activation: Activation,
    },
    Maxpool1d {
        pool_size: usize,
    },
    Flatten,
    Dense {
        units: usize,
        activation: Activation,
    },
    Lstm {
        units: usize,
        #[serde(default)]
        return_sequences: bool,
    },
    Bilstm {
        units: usize,
        #[serde(default)]
        return_sequences: bool,
    },
}

impl LayerSpec {
    pub fn conv1d(filters: usize, kernel_size: usize) -> Self {
        LayerSpec::Conv1d { filters, kernel_size, activation: Activation::Relu }
    }

    pub fn dense(units: usize, activation: Activation) -> Self {
        LayerSpec::Dense { units, activation }
    }

    pub fn lstm(units: usize) -> Self {
        LayerSpec::Lstm { units, return_sequences: false }
    }

    pub fn bilstm(units: usize) -> Self {
        LayerSpec::Bilstm { units, return_sequences: false }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv1d { .. } => "conv1d",
            LayerSpec::Maxpool1d { .. } => "maxpool1d",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Lstm { .. } => "lstm",
            LayerSpec::Bilstm { .. } => "bilstm",
        }
    }

    /// Output shape for a given input shape, or a shape error.
    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let seq = |what: &str| match input {
            [l, c] => Ok((*l, *c)),
            other => Err(Error::Shape(format!("{what} needs a (len, features) input, got {other:?}"))),
        };
        let positive = |name: &str, v: usize| {
            if v == 0 {
                Err(Error::Shape(format!("{} {name} must be >= 1", self.kind())))
            } else {
                Ok(())
            }
        };
        match *self {
            LayerSpec::Conv1d { filters, kernel_size, .. } => {
                positive("filters", filters)?;
                positive("kernel_size", kernel_size)?;
                let (l, _) = seq("conv1d")?;
                if l < kernel_size {
                    return Err(Error::Shape(format!("conv1d: length {l} < kernel size {kernel_size}")));
                }
                Ok(vec![l - kernel_size + 1, filters])
            }
            LayerSpec::Maxpool1d { pool_size } => {
                positive("pool_size", pool_size)?;
                let (l, c) = seq("maxpool1d")?;
                if l < pool_size {
                    return Err(Error::Shape(format!("maxpool1d: length {l} < pool size {pool_size}")));
                }
                Ok(vec![l / pool_size, c])
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Dense { units, .. } => {
                positive("units", units)?;
                match input {
                    [_] => Ok(vec![units]),
                    other => Err(Error::Shape(format!("dense needs a vector input, got {other:?}; add flatten"))),
                }
            }
            LayerSpec::Lstm { units, return_sequences } => {
                positive("units", units)?;
                let (l, _) = seq("lstm")?;
                Ok(if return_sequences { vec![l, units] } else { vec![units] })
            }
            LayerSpec::Bilstm { units, return_sequences } => {
                positive("units", units)?;
                let (l, _) = seq("bilstm")?;
                Ok(if return_sequences { vec![l, 2 * units] } else { vec![2 * units] })
            }
        }
    }

    fn param_shapes(&self, input: &[usize]) -> Vec<Vec<usize>> {
        let features = input.last().copied().unwrap_or(0);
        match *self {
            LayerSpec::Conv1d { filters, kernel_size, .. } => {
                vec![vec![filters, kernel_size, features], vec![filters]]
            }
            LayerSpec::Dense { units, .. } => vec![vec![units, features], vec![units]],
            LayerSpec::Lstm { units, .. } => {
                vec![vec![4 * units, features], vec![4 * units, units], vec![4 * units]]
            }
            LayerSpec::Bilstm { units, .. } => {
                let one = vec![vec![4 * units, features], vec![4 * units, units], vec![4 * units]];
                one.iter().chain(one.iter()).cloned().collect()
            }
            LayerSpec::Maxpool1d { .. } | LayerSpec::Flatten => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub spec: LayerSpec,
    pub input_shape: Vec<usize>,
    pub output_shape: Vec<usize>,
    pub params: Vec<Tensor>,
}

#[derive(Debug, Clone)]
enum LayerCache {
    Conv { pre: Vec<f64> },
    Pool { argmax: Vec<usize> },
    Flatten,
    Dense { pre: Vec<f64> },
    Lstm(LstmCache),
    BiLstm(Box<BiLstmCache>),
}

impl LayerCache {
    fn size_bytes(&self) -> usize {
        let f = std::mem::size_of::<f64>();
        match self {
            LayerCache::Conv { pre } | LayerCache::Dense { pre } => pre.len() * f,
            LayerCache::Pool { argmax } => argmax.len() * std::mem::size_of::<usize>(),
            LayerCache::Flatten => 0,
            LayerCache::Lstm(c) => c.size_bytes(),
            LayerCache::BiLstm(c) => {
                c.forward.size_bytes() + c.backward.size_bytes() + c.reversed_input.size_bytes()
            }
        }
    }
}

fn lstm_params(params: &[Tensor]) -> LstmParams<'_> {
    LstmParams { kernel: &params[0], recurrent: &params[1], bias: &params[2] }
}

fn lstm_grads(grads: &mut [Tensor]) -> LstmGrads<'_> {
    let [k, r, b] = grads else { unreachable!("lstm has three parameter tensors") };
    LstmGrads { kernel: k.data_mut(), recurrent: r.data_mut(), bias: b.data_mut() }
}

impl Layer {
    fn forward(&self, input: &Tensor) -> Result<(Tensor, LayerCache)> {
        if input.shape() != self.input_shape.as_slice() {
            return Err(Error::Shape(format!(
                "{} expects input {:?}, got {:?}",
                self.spec.kind(),
                self.input_shape,
                input.shape()
            )));
        }
        let p = &self.params;
        Ok(match self.spec {
            LayerSpec::Conv1d { activation, .. } => {
                let (out, pre) = layers::conv1d_forward(input, &p[0], &p[1], activation)?;
                (out, LayerCache::Conv { pre })
            }
            LayerSpec::Maxpool1d { pool_size } => {
                let (out, argmax) = layers::maxpool1d_forward(input, pool_size)?;
                (out, LayerCache::Pool { argmax })
            }
            LayerSpec::Flatten => (input.clone().reshaped(self.output_shape.clone())?, LayerCache::Flatten),
            LayerSpec::Dense { activation, .. } => {
                let (out, pre) = layers::dense_forward(input, &p[0], &p[1], activation)?;
                (out, LayerCache::Dense { pre })
            }
            LayerSpec::Lstm { return_sequences, .. } => {
                let (out, cache) = layers::lstm_forward(input, lstm_params(p), return_sequences)?;
                (out, LayerCache::Lstm(cache))
            }
            LayerSpec::Bilstm { return_sequences, .. } => {
                let (out, cache) =
                    layers::bilstm_forward(input, lstm_params(&p[..3]), lstm_params(&p[3..]), return_sequences)?;
                (out, LayerCache::BiLstm(Box::new(cache)))
            }
        })
    }

    fn backward(
        &self,
        input: &Tensor,
        output: &Tensor,
        cache: &LayerCache,
        grad_out: &Tensor,
        grads: &mut [Tensor],
    ) -> Tensor {
        let p = &self.params;
        match (&self.spec, cache) {
            (LayerSpec::Conv1d { activation, .. }, LayerCache::Conv { pre }) => {
                let [gw, gb] = grads else { unreachable!() };
                layers::conv1d_backward(input, &p[0], pre, output, *activation, grad_out, gw.data_mut(), gb.data_mut())
            }
            (LayerSpec::Maxpool1d { .. }, LayerCache::Pool { argmax }) => {
                layers::maxpool1d_backward(&self.input_shape, argmax, grad_out)
            }
            (LayerSpec::Flatten, LayerCache::Flatten) => {
                grad_out.clone().reshaped(self.input_shape.clone()).expect("flatten preserves size")
            }
            (LayerSpec::Dense { activation, .. }, LayerCache::Dense { pre }) => {
                let [gw, gb] = grads else { unreachable!() };
                layers::dense_backward(input, &p[0], pre, output, *activation, grad_out, gw.data_mut(), gb.data_mut())
            }
            (LayerSpec::Lstm { .. }, LayerCache::Lstm(cache)) => {
                layers::lstm_backward(input, lstm_params(p), cache, grad_out, lstm_grads(grads))
            }
            (LayerSpec::Bilstm { .. }, LayerCache::BiLstm(cache)) => {
                let (gf, gb) = grads.split_at_mut(3);
                layers::bilstm_backward(
                    input,
                    lstm_params(&p[..3]),
                    lstm_params(&p[3..]),
                    cache,
                    grad_out,
                    lstm_grads(gf),
                    lstm_grads(gb),
                )
            }
            _ => unreachable!("cache produced by a different layer kind"),
        }
    }

    fn init(&mut self, rng: &mut Rng) {
        let glorot = |t: &mut Tensor, fan_in: usize, fan_out: usize, rng: &mut Rng| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in t.data_mut() {
                *v = rng.random_range(-limit..limit);
            }
        };
        let features = self.input_shape.last().copied().unwrap_or(0);
        match self.spec {
            LayerSpec::Conv1d { filters, kernel_size, .. } => {
                glorot(&mut self.params[0], kernel_size * features, kernel_size * filters, rng);
                self.params[1].fill(0.0);
            }
            LayerSpec::Dense { units, .. } => {
                glorot(&mut self.params[0], features, units, rng);
                self.params[1].fill(0.0);
            }
            LayerSpec::Lstm { units, .. } | LayerSpec::Bilstm { units, .. } => {
                for dir in self.params.chunks_mut(3) {
                    glorot(&mut dir[0], features, 4 * units, rng);
                    orthogonal(&mut dir[1], rng);
                    let bias = dir[2].data_mut();
                    bias.fill(0.0);
                    bias[units..2 * units].fill(1.0);
                }
            }
            LayerSpec::Maxpool1d { .. } | LayerSpec::Flatten => {}
        }
    }
}

/// Fills a `(rows, cols)` matrix, `rows >= cols`, with orthonormal columns
/// (Gram-Schmidt on Gaussian draws).
fn orthogonal(t: &mut Tensor, rng: &mut Rng) {
    let (rows, cols) = t.dims2();
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(cols);
    while columns.len() < cols {
        let mut v: Vec<f64> = (0..rows).map(|_| StandardNormal.sample(rng)).collect();
        for q in &columns {
            let proj: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= proj * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|a| *a /= norm);
            columns.push(v);
        }
    }
    let data = t.data_mut();
    for (c, col) in columns.iter().enumerate() {
        for (r, v) in col.iter().enumerate() {
            data[r * cols + c] = *v;
        }
    }
}

/// Parameter gradients laid out like [`Network::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self { tensors: net.params().map(|p| Tensor::zeros(p.shape())).collect() }
    }

    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.data_mut().iter_mut().zip(b.data()).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in &mut self.tensors {
            t.data_mut().iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }
}

/// Every intermediate of one forward pass, needed for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Network input followed by the output of every layer.
    activations: Vec<Tensor>,
    caches: Vec<LayerCache>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Tensor {
        self.activations.last().expect("trace holds at least the input")
    }

    /// Heap bytes held by activations and caches.
    pub fn size_bytes(&self) -> usize {
        self.activations.iter().map(Tensor::size_bytes).sum::<usize>()
            + self.caches.iter().map(LayerCache::size_bytes).sum::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
}

impl Network {
    /// Builds the stack with Glorot-uniform conv/dense kernels, orthogonal
    /// recurrent kernels and zero biases (forget gate bias 1).
    pub fn new(input_shape: &[usize], specs: &[LayerSpec], seed: u64) -> Result<Self> {
        let mut net = Self::zeroed(input_shape, specs)?;
        let mut rng = crate::rng::seeded(seed);
        for layer in &mut net.layers {
            layer.init(&mut rng);
        }
        Ok(net)
    }

    /// Same architecture with every parameter zero.
    pub fn zeroed(input_shape: &[usize], specs: &[LayerSpec]) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Shape("network needs at least one layer".into()));
        }
        let mut shape = input_shape.to_vec();
        let mut layers = Vec::with_capacity(specs.len());
        for spec in specs {
            let output_shape = spec.output_shape(&shape)?;
            let params = spec.param_shapes(&shape).iter().map(|s| Tensor::zeros(s)).collect();
            layers.push(Layer { spec: *spec, input_shape: shape, output_shape: output_shape.clone(), params });
            shape = output_shape;
        }
        Ok(Self { input_shape: input_shape.to_vec(), layers })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.layers.last().expect("nonempty").output_shape
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn params(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(|l| l.params.iter())
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| l.params.iter_mut()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().map(Tensor::len).sum()
    }

    pub fn param_bytes(&self) -> usize {
        self.params().map(Tensor::size_bytes).sum()
    }

    pub fn forward_traced(&self, input: &Tensor) -> Result<ForwardTrace> {
        if cfg!(debug_assertions) && !input.is_finite() {
            return Err(Error::NonFinite("network input"));
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut caches = Vec::with_capacity(self.layers.len());
        activations.push(input.clone());
        for layer in &self.layers {
            let (out, cache) = layer.forward(activations.last().unwrap())?;
            activations.push(out);
            caches.push(cache);
        }
        Ok(ForwardTrace { activations, caches })
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let mut trace = self.forward_traced(input)?;
        Ok(trace.activations.pop().unwrap())
    }

    /// Backpropagates `grad_out` (dLoss/dOutput) through the trace,
    /// accumulating into `grads`; returns dLoss/dInput.
    pub fn backward(&self, trace: &ForwardTrace, grad_out: &Tensor, grads: &mut Gradients) -> Result<Tensor> {
        if grad_out.shape() != self.output_shape() {
            return Err(Error::Shape(format!(
                "output gradient {:?} does not match output {:?}",
                grad_out.shape(),
                self.output_shape()
            )));
        }
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut offset = 0;
        for layer in &self.layers {
            offsets.push(offset);
            offset += layer.params.len();
        }
        let mut g = grad_out.clone();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let slot = &mut grads.tensors[offsets[k]..offsets[k] + layer.params.len()];
            g = layer.backward(&trace.activations[k], &trace.activations[k + 1], &trace.caches[k], &g, slot);
        }
        Ok(g)
    }
}
