//! Independent reference implementations shared by the integration tests.

#![allow(dead_code)]

use linkfdr::nn::{Gradients, Network, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor for relative errors, so entries with a vanishing
/// gradient are compared on an absolute scale.
pub const REL_FLOOR: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_bits(rng: &mut impl Rng, n: usize, p_one: f64) -> Vec<u8> {
    (0..n).map(|_| rng.random_bool(p_one) as u8).collect()
}

/// Mean of `x[i+1..=i+h]`, counting ones one element at a time.
pub fn fdr_target_oracle(x: &[u8], i: usize, h: usize) -> Option<f64> {
    if i + h >= x.len() {
        return None;
    }
    let mut ones: u64 = 0;
    let mut j = i + 1;
    while j <= i + h {
        if x[j] == 1 {
            ones += 1;
        }
        j += 1;
    }
    Some(ones as f64 / h as f64)
}

/// Smallest order statistic whose rank `k` satisfies `k / n >= p / 100`.
pub fn percentile_oracle(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if p == 0.0 {
        return v[0];
    }
    (1..=n).find(|&k| k as f64 * 100.0 >= p * n as f64).map(|k| v[k - 1]).unwrap()
}

pub fn mean_oracle(values: &[f64]) -> f64 {
    let mut s = 0.0;
    for v in values.iter().rev() {
        s += v;
    }
    s / values.len() as f64
}

pub fn population_std_oracle(values: &[f64]) -> f64 {
    let m = mean_oracle(values);
    let mut s = 0.0;
    for v in values.iter().rev() {
        s += (v - m).powi(2);
    }
    (s / values.len() as f64).sqrt()
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Outcome of comparing analytic and finite-difference gradients.
#[derive(Debug, Default, Clone, Copy)]
pub struct GradCheck {
    pub checked: usize,
    /// Entries skipped because the finite difference straddles a kink.
    pub kinks: usize,
    pub max_rel_error: f64,
}

impl GradCheck {
    pub fn merge(&mut self, other: GradCheck) {
        self.checked += other.checked;
        self.kinks += other.kinks;
        self.max_rel_error = self.max_rel_error.max(other.max_rel_error);
    }
}

fn weighted_loss(net: &Network, x: &Tensor, w: &[f64]) -> f64 {
    let out = net.forward(x).unwrap();
    out.data().iter().zip(w).map(|(o, w)| o * w).sum()
}

/// Central difference at `v`, or `None` when the one-sided slopes disagree,
/// meaning a ReLU or max-pool switched inside `[v - h, v + h]`.
fn central_difference(f: &mut dyn FnMut(f64) -> f64, v: f64) -> Option<f64> {
    let (lo, mid, hi) = (f(v - FD_STEP), f(v), f(v + FD_STEP));
    let left = (mid - lo) / FD_STEP;
    let right = (hi - mid) / FD_STEP;
    if (right - left).abs() > 1e-3 * (1.0 + left.abs().max(right.abs())) {
        return None;
    }
    Some((hi - lo) / (2.0 * FD_STEP))
}

/// Checks every parameter and input gradient of `net` for the scalar loss
/// `sum(w * net(x))` with random `w`.
pub fn gradcheck(net: &Network, x: &Tensor, seed: u64) -> GradCheck {
    let mut r = rng(seed);
    let w: Vec<f64> = (0..net.output_shape().iter().product::<usize>()).map(|_| r.random_range(-1.0..1.0)).collect();
    let trace = net.forward_traced(x).unwrap();
    let mut grads = Gradients::zeros_like(net);
    let grad_out = Tensor::new(net.output_shape().to_vec(), w.clone()).unwrap();
    let dx = net.backward(&trace, &grad_out, &mut grads).unwrap();

    let mut report = GradCheck::default();
    let mut compare = |analytic: f64, numeric: Option<f64>| match numeric {
        None => report.kinks += 1,
        Some(n) => {
            report.checked += 1;
            report.max_rel_error = report.max_rel_error.max(relative_error(analytic, n));
        }
    };

    let n_params = net.params().count();
    for p in 0..n_params {
        for j in 0..grads.tensors[p].len() {
            let base = net.params().nth(p).unwrap().data()[j];
            let mut f = |v: f64| {
                let mut probe = net.clone();
                probe.params_mut()[p].data_mut()[j] = v;
                weighted_loss(&probe, x, &w)
            };
            compare(grads.tensors[p].data()[j], central_difference(&mut f, base));
        }
    }
    for j in 0..x.len() {
        let mut f = |v: f64| {
            let mut probe = x.clone();
            probe.data_mut()[j] = v;
            weighted_loss(net, &probe, &w)
        };
        compare(dx.data()[j], central_difference(&mut f, x.data()[j]));
    }
    report
}
