use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Decay, ModelConfig, ModelKind};
use crate::dataset::{oversample_minority, Split, WindowedDataset};
use crate::nn::{adam_step, lr_at_epoch, mse_grad, AdamState, EarlyStopping, Gradients, Network, StopDecision, Tensor};
use crate::rng;
use crate::{Error, Result};

/// Examples per gradient work unit. Fixed so the summation order, and hence
/// the result, does not depend on the number of threads.
const CHUNK: usize = 8;

/// A network together with the config that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub config: ModelConfig,
    pub network: Network,
}

/// Raw regression output and the same value clamped to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub raw: f64,
    pub clamped: f64,
}

/// Builds the untrained model: `conv1d -> [maxpool] -> flatten -> dense...`
/// for the CNN, `(bi)lstm [-> (bi)lstm] -> dense...` for the recurrent ones.
pub fn build_model(config: &ModelConfig) -> Result<Model> {
    let network = Network::new(&[config.window, 1], &config.layer_specs()?, rng::derive(config.seed, 1))?;
    Ok(Model { config: config.clone(), network })
}

impl Model {
    pub fn param_count(&self) -> usize {
        self.network.param_count()
    }

    fn input_tensor(&self, window: &[f64]) -> Result<Tensor> {
        if window.len() != self.config.window {
            return Err(Error::Shape(format!(
                "window has {} samples, model expects {}",
                window.len(),
                self.config.window
            )));
        }
        Ok(Tensor::sequence(window.to_vec()))
    }

    pub fn predict(&self, window: &[f64]) -> Result<Prediction> {
        let raw = self.network.forward(&self.input_tensor(window)?)?.data()[0];
        Ok(Prediction { raw, clamped: raw.clamp(0.0, 1.0) })
    }

    pub fn predict_bits(&self, window: &[u8]) -> Result<Prediction> {
        self.predict(&window.iter().map(|&b| b as f64).collect::<Vec<_>>())
    }

    /// Raw predictions for dataset examples, in the given order.
    pub fn predict_examples(&self, data: &WindowedDataset, indices: &[usize]) -> Result<Vec<f64>> {
        self.check_dataset(data)?;
        indices
            .par_iter()
            .map(|&k| self.predict(&data.input(k)).map(|p| p.raw))
            .collect()
    }

    fn check_dataset(&self, data: &WindowedDataset) -> Result<()> {
        if data.window() != self.config.window {
            return Err(Error::Shape(format!(
                "dataset windows have {} samples, model expects {}",
                data.window(),
                self.config.window
            )));
        }
        Ok(())
    }

    /// Mean squared error of the raw predictions over one split.
    pub fn split_mse(&self, data: &WindowedDataset, split: Split) -> Result<f64> {
        let idx = data.indices(split);
        let preds = self.predict_examples(data, &idx)?;
        let targets: Vec<f64> = idx.iter().map(|&k| data.target(k)).collect();
        crate::nn::mse_loss(&preds, &targets)
    }

    /// Summed gradient of the batch MSE plus the batch's summed squared error.
    pub fn batch_gradients(&self, data: &WindowedDataset, batch: &[usize]) -> Result<(Gradients, f64)> {
        let n = batch.len();
        let parts: Vec<Result<(Gradients, f64)>> = batch
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut grads = Gradients::zeros_like(&self.network);
                let mut sse = 0.0;
                for &k in chunk {
                    let trace = self.network.forward_traced(&self.input_tensor(&data.input(k))?)?;
                    let p = trace.output().data()[0];
                    let t = data.target(k);
                    sse += (p - t) * (p - t);
                    self.network.backward(&trace, &Tensor::vector(vec![mse_grad(p, t, n)]), &mut grads)?;
                }
                Ok((grads, sse))
            })
            .collect();
        let mut total = Gradients::zeros_like(&self.network);
        let mut sse = 0.0;
        for part in parts {
            let (g, s) = part?;
            total.add(&g);
            sse += s;
        }
        Ok((total, sse))
    }
}

/// Model plus optimizer state, advanced one epoch at a time.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: Model,
    pub optimizer: AdamState,
}

impl Trainer {
    pub fn new(model: Model) -> Self {
        Self { model, optimizer: AdamState::default() }
    }

    pub fn learning_rate(&self, epoch: u32) -> f64 {
        match self.model.config.decay {
            Decay::Halving => lr_at_epoch(self.model.config.lr0, epoch),
            Decay::Constant => self.model.config.lr0,
        }
    }

    /// Order in which the training examples are visited in `epoch`: a seeded
    /// shuffle for the CNN, time order for the recurrent models.
    pub fn epoch_order(&self, data: &WindowedDataset, epoch: u32) -> Vec<usize> {
        let mut order = data.indices(Split::Train);
        if self.model.config.oversample {
            order = oversample_minority(data, &order);
        }
        match self.model.config.model {
            ModelKind::Cnn => {
                let mut rng = rng::seeded(rng::derive(self.model.config.seed, 1000 + epoch as u64));
                order.shuffle(&mut rng);
            }
            ModelKind::Lstm | ModelKind::BiLstm => order.sort_unstable(),
        }
        order
    }

    /// One pass over the training split in minibatches of `batch_size`.
    /// Returns the mean training loss (squared error before each update).
    pub fn train_epoch(&mut self, data: &WindowedDataset, epoch: u32) -> Result<f64> {
        self.train_epoch_observed(data, epoch, &mut |_| {})
    }

    /// [`Trainer::train_epoch`], reporting every example used for a
    /// gradient step to `observer`.
    pub fn train_epoch_observed(
        &mut self,
        data: &WindowedDataset,
        epoch: u32,
        observer: &mut dyn FnMut(usize),
    ) -> Result<f64> {
        self.model.check_dataset(data)?;
        let order = self.epoch_order(data, epoch);
        if order.is_empty() {
            return Err(Error::Empty("training split"));
        }
        let lr = self.learning_rate(epoch);
        let mut sse = 0.0;
        for batch in order.chunks(self.model.config.batch_size) {
            batch.iter().for_each(|&k| observer(k));
            let (grads, batch_sse) = self.model.batch_gradients(data, batch)?;
            if !grads.is_finite() {
                return Err(Error::NonFinite("gradient"));
            }
            adam_step(&mut self.model.network.params_mut(), &grads.tensors, &mut self.optimizer, lr)?;
            sse += batch_sse;
        }
        Ok(sse / order.len() as f64)
    }
}

/// Trains one epoch, creating a fresh optimizer. Use [`Trainer`] to carry
/// Adam's moments across epochs.
pub fn train_epoch(model: Model, data: &WindowedDataset, epoch: u32) -> Result<(Model, f64)> {
    let mut trainer = Trainer::new(model);
    let loss = trainer.train_epoch(data, epoch)?;
    Ok((trainer.model, loss))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Mean squared error on the validation split.
    pub val_loss: f64,
    /// Summed squared error on the validation split, `J(M, theta, tau)`.
    pub val_sse: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub model: Model,
    pub history: Vec<EpochRecord>,
    /// 1-based epoch whose weights `model` holds.
    pub best_epoch: usize,
}

impl TrainedModel {
    pub fn config(&self) -> &ModelConfig {
        &self.model.config
    }

    pub fn val_sse_series(&self) -> Vec<f64> {
        self.history.iter().map(|h| h.val_sse).collect()
    }

    pub fn history_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss,lr\n");
        for h in &self.history {
            s.push_str(&format!("{},{:?},{:?},{:?}\n", h.epoch, h.train_loss, h.val_loss, h.lr));
        }
        s
    }
}

/// What [`fit_observed`] reports for each example it touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    Gradient(usize),
    Validation(usize),
}

/// Trains for up to `epochs` epochs, evaluating the validation split after
/// each one, stopping early when configured and restoring the weights of the
/// best validation epoch.
pub fn fit(model: Model, data: &WindowedDataset) -> Result<TrainedModel> {
    fit_observed(model, data, &mut |_| {})
}

pub fn fit_observed(model: Model, data: &WindowedDataset, observer: &mut dyn FnMut(Access)) -> Result<TrainedModel> {
    let val = data.indices(Split::Val);
    if val.is_empty() {
        return Err(Error::Empty("validation split"));
    }
    let val_targets: Vec<f64> = val.iter().map(|&k| data.target(k)).collect();
    let epochs = model.config.epochs;
    let mut stopper = model.config.early_stopping.map(|c| EarlyStopping::new(c.patience, c.min_delta));
    let mut trainer = Trainer::new(model);
    let mut history = Vec::with_capacity(epochs);
    let mut best: Option<(f64, usize, Network)> = None;

    for epoch in 1..=epochs {
        let lr = trainer.learning_rate(epoch as u32);
        let train_loss = trainer.train_epoch_observed(data, epoch as u32, &mut |k| observer(Access::Gradient(k)))?;
        val.iter().for_each(|&k| observer(Access::Validation(k)));
        let preds = trainer.model.predict_examples(data, &val)?;
        let val_sse = crate::nn::sse_loss(&preds, &val_targets)?;
        let val_loss = val_sse / val.len() as f64;
        if !val_loss.is_finite() {
            return Err(Error::NonFinite("validation loss"));
        }
        history.push(EpochRecord { epoch, train_loss, val_loss, val_sse, lr });
        log::debug!("epoch {epoch}: train {train_loss:.6} val {val_loss:.6} lr {lr:e}");

        if best.as_ref().map_or(true, |(b, _, _)| val_loss < *b) {
            best = Some((val_loss, epoch, trainer.model.network.clone()));
        }
        if let Some(es) = stopper.as_mut() {
            if es.update(val_loss).decision == StopDecision::Stop {
                break;
            }
        }
    }

    let (_, best_epoch, network) = best.expect("at least one epoch ran");
    let mut model = trainer.model;
    model.network = network;
    Ok(TrainedModel { model, history, best_epoch })
}
