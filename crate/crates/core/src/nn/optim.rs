//! Adam, the per-epoch learning-rate halving and early stopping.

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl Default for AdamState {
    fn default() -> Self {
        Self::new(0.9, 0.999, 1e-8)
    }
}

impl AdamState {
    pub fn new(beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self { step: 0, beta1, beta2, epsilon, first_moment: Vec::new(), second_moment: Vec::new() }
    }

    pub fn first_moment(&self) -> &[Vec<f64>] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[Vec<f64>] {
        &self.second_moment
    }
}

/// One bias-corrected Adam update. Moment buffers are allocated on the first
/// call and must keep matching the parameter shapes afterwards.
pub fn adam_step(params: &mut [&mut Tensor], grads: &[Tensor], state: &mut AdamState, lr: f64) -> Result<()> {
    if !(lr.is_finite() && lr > 0.0) {
        return Err(Error::Config(format!("learning rate must be > 0, got {lr}")));
    }
    if params.len() != grads.len() {
        return Err(Error::Shape(format!("{} parameters but {} gradients", params.len(), grads.len())));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::Shape(format!("parameter {:?} vs gradient {:?}", p.shape(), g.shape())));
        }
        if !g.is_finite() {
            return Err(Error::NonFinite("gradient"));
        }
    }
    if state.first_moment.is_empty() {
        state.first_moment = params.iter().map(|p| vec![0.0; p.len()]).collect();
        state.second_moment = state.first_moment.clone();
    } else if state.first_moment.len() != params.len()
        || state.first_moment.iter().zip(params.iter()).any(|(m, p)| m.len() != p.len())
    {
        return Err(Error::Shape("optimizer state does not match the parameters".into()));
    }

    state.step += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let correction1 = 1.0 - b1.powi(state.step as i32);
    let correction2 = 1.0 - b2.powi(state.step as i32);
    for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = &mut state.first_moment[k];
        let v = &mut state.second_moment[k];
        for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            let m_hat = *mi / correction1;
            let v_hat = *vi / correction2;
            *w -= lr * m_hat / (v_hat.sqrt() + state.epsilon);
        }
    }
    Ok(())
}

/// `lr0 * 2^-(epoch - 1)`: the rate halves after every epoch. Epochs are
/// 1-based.
pub fn lr_at_epoch(lr0: f64, epoch: u32) -> f64 {
    assert!(epoch >= 1, "epochs are numbered from 1");
    lr0 * 2f64.powi(-(epoch as i32 - 1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EarlyStopUpdate {
    pub decision: StopDecision,
    pub improved: bool,
    /// 1-based epoch with the lowest validation loss so far.
    pub best_epoch: usize,
    pub best_loss: f64,
}

/// Stops once `patience` consecutive epochs fail to beat the best validation
/// loss by more than `min_delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopping {
    pub patience: usize,
    pub min_delta: f64,
    epoch: usize,
    best_loss: f64,
    best_epoch: usize,
    wait: usize,
}

impl Default for EarlyStopping {
    fn default() -> Self {
        Self::new(3, 0.0)
    }
}

impl EarlyStopping {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        Self { patience, min_delta, epoch: 0, best_loss: f64::INFINITY, best_epoch: 0, wait: 0 }
    }

    pub fn update(&mut self, val_loss: f64) -> EarlyStopUpdate {
        self.epoch += 1;
        let improved = val_loss < self.best_loss - self.min_delta;
        if improved {
            self.best_loss = val_loss;
            self.best_epoch = self.epoch;
            self.wait = 0;
        } else {
            self.wait += 1;
        }
        let decision = if !improved && self.wait >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        };
        EarlyStopUpdate { decision, improved, best_epoch: self.best_epoch, best_loss: self.best_loss }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = Tensor::vector(vec![0.3, -1.2]);
        let before = p.clone();
        let mut state = AdamState::default();
        adam_step(&mut [&mut p], &[Tensor::vector(vec![0.0, 0.0])], &mut state, 0.1).unwrap();
        assert_eq!(p, before);
        assert!(state.first_moment()[0].iter().chain(&state.second_moment()[0]).all(|&m| m == 0.0));
        assert_eq!(state.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = Tensor::vector(vec![0.0]);
        let mut state = AdamState::default();
        adam_step(&mut [&mut p], &[Tensor::vector(vec![1.0])], &mut state, 0.1).unwrap();
        assert!((p.data()[0] + 0.1).abs() < 1e-8, "{}", p.data()[0]);
    }

    #[test]
    fn parameters_update_independently() {
        let mut a = Tensor::vector(vec![1.0, 1.0]);
        let mut b = Tensor::vector(vec![1.0, 1.0]);
        let mut sa = AdamState::default();
        let mut sb = AdamState::default();
        for _ in 0..5 {
            adam_step(&mut [&mut a], &[Tensor::vector(vec![0.5, -2.0])], &mut sa, 0.01).unwrap();
            adam_step(&mut [&mut b], &[Tensor::vector(vec![0.5, 7.0])], &mut sb, 0.01).unwrap();
        }
        assert_eq!(a.data()[0], b.data()[0]);
        assert_ne!(a.data()[1], b.data()[1]);
    }

    #[test]
    fn adam_errors() {
        let mut p = Tensor::vector(vec![0.0]);
        let mut s = AdamState::default();
        assert!(adam_step(&mut [&mut p], &[Tensor::vector(vec![f64::NAN])], &mut s, 0.1).is_err());
        assert!(adam_step(&mut [&mut p], &[Tensor::vector(vec![1.0, 2.0])], &mut s, 0.1).is_err());
        assert!(adam_step(&mut [&mut p], &[Tensor::vector(vec![1.0])], &mut s, 0.0).is_err());
    }

    #[test]
    fn lr_schedule() {
        assert_eq!(lr_at_epoch(0.01, 1), 0.01);
        assert_eq!(lr_at_epoch(0.01, 3), 0.0025);
        for t in 1..40 {
            assert!(lr_at_epoch(0.01, t + 1) < lr_at_epoch(0.01, t));
        }
    }

    #[test]
    fn early_stopping_trace() {
        let mut es = EarlyStopping::new(3, 0.0);
        let decisions: Vec<_> = [1.0, 0.5, 0.6, 0.7, 0.8].iter().map(|&l| es.update(l)).collect();
        assert!(decisions[..4].iter().all(|d| d.decision == StopDecision::Continue));
        assert_eq!(decisions[4].decision, StopDecision::Stop);
        assert_eq!(decisions[4].best_epoch, 2);
    }

    #[test]
    fn early_stopping_never_fires_on_improvement() {
        let mut es = EarlyStopping::new(0, 0.0);
        for k in 0..30 {
            assert_eq!(es.update(10.0 - k as f64).decision, StopDecision::Continue);
        }
        let mut es = EarlyStopping::new(0, 0.0);
        es.update(1.0);
        assert_eq!(es.update(1.0).decision, StopDecision::Stop);
    }
}
