//! CNN, LSTM and Bi-LSTM FDR regressors.
//!
//! [`ModelConfig`] carries the hyperparameters (with the full-scale
//! [`ModelConfig::full`] and reduced [`ModelConfig::desk`] presets),
//! [`build_model`] turns it into a [`Model`], and [`fit`] trains it with
//! Adam, per-epoch learning-rate halving and early stopping on the
//! validation MSE.
//!
//! The CNN sees its training windows in a fresh seeded shuffle every epoch;
//! the recurrent models see them in time order. Recurrent state always
//! starts from zero at the beginning of each window.

mod checkpoint;
mod config;
mod train;

pub use checkpoint::{CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use config::{Condition, Decay, EarlyStopConfig, ModelConfig, ModelKind};
pub use train::{
    build_model, fit, fit_observed, train_epoch, Access, EpochRecord, Model, Prediction, TrainedModel, Trainer,
};
