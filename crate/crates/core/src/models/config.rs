use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::nn::{Activation, LayerSpec, Network};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Cnn,
    Lstm,
    #[serde(rename = "bilstm")]
    BiLstm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Cnn, ModelKind::Lstm, ModelKind::BiLstm];

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Cnn => "CNN",
            ModelKind::Lstm => "LSTM",
            ModelKind::BiLstm => "Bi-LSTM",
        }
    }

    pub fn is_recurrent(self) -> bool {
        !matches!(self, ModelKind::Cnn)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cnn" => Ok(ModelKind::Cnn),
            "lstm" => Ok(ModelKind::Lstm),
            "bilstm" | "bi-lstm" => Ok(ModelKind::BiLstm),
            other => Err(Error::Config(format!("unknown model {other:?}, expected cnn, lstm or bilstm"))),
        }
    }
}

/// Training on one channel's data (`ch`) or on the four channels
/// concatenated (`all`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Ch,
    All,
}

impl Condition {
    pub fn label(self) -> &'static str {
        match self {
            Condition::Ch => "ch",
            Condition::All => "all",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ch" => Ok(Condition::Ch),
            "all" => Ok(Condition::All),
            other => Err(Error::Config(format!("unknown condition {other:?}, expected ch or all"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decay {
    /// `lr0 * 2^-(epoch - 1)`.
    Halving,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopConfig {
    pub patience: usize,
    pub min_delta: f64,
}

impl Default for EarlyStopConfig {
    fn default() -> Self {
        Self { patience: 3, min_delta: 0.0 }
    }
}

/// The hyperparameter vector of one regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub model: ModelKind,
    pub condition: Condition,
    /// Input sequence length `l`.
    pub window: usize,
    pub batch_size: usize,
    /// Maximum number of epochs `N_tau`.
    pub epochs: usize,
    pub lr0: f64,
    pub decay: Decay,
    /// Conv1D filters (CNN only).
    #[serde(default)]
    pub filters: usize,
    /// Conv1D kernel size (CNN only).
    #[serde(default)]
    pub kernel_size: usize,
    /// Max-pooling size after the convolution (CNN only), `None` to skip.
    #[serde(default)]
    pub pooling: Option<usize>,
    /// Units of each stacked recurrent layer (LSTM / Bi-LSTM only).
    #[serde(default)]
    pub lstm_units: Vec<usize>,
    /// Dense stack after the feature extractor; the last entry must be 1.
    pub dense_units: Vec<usize>,
    /// Activation of every dense layer but the last, which is linear.
    pub dense_activation: Activation,
    #[serde(default)]
    pub early_stopping: Option<EarlyStopConfig>,
    /// Repeat minority-class examples in the training split.
    #[serde(default)]
    pub oversample: bool,
    pub seed: u64,
}

impl ModelConfig {
    /// The hyperparameters selected for the full-scale experiments.
    ///
    /// | | CNN ch | CNN all | LSTM/Bi-LSTM ch | LSTM/Bi-LSTM all |
    /// |---|---|---|---|---|
    /// | `l` | 3600 | 3600 | 1200 | 1200 |
    /// | batch | 64 | 128 | 32 | 64 |
    /// | epochs | 30 | 40 | 15 | 25 |
    /// | `lr0` (halving) | 0.01 | 0.005 | 0.01 | 0.005 |
    /// | filters / units | 128 | 256 | 25 | 25, 50 |
    /// | kernel | 3 | 5 | | |
    /// | dense | 128, 64, 1 | 256, 128, 64, 1 | 1 | 8, 1 |
    ///
    /// The CNN runs without pooling; [`ModelConfig::with_pooling`] adds a
    /// size-2 max-pool after the convolution.
    pub fn full(model: ModelKind, condition: Condition) -> Self {
        let base = Self {
            model,
            condition,
            window: 0,
            batch_size: 0,
            epochs: 0,
            lr0: 0.0,
            decay: Decay::Halving,
            filters: 0,
            kernel_size: 0,
            pooling: None,
            lstm_units: Vec::new(),
            dense_units: Vec::new(),
            dense_activation: Activation::Relu,
            early_stopping: Some(EarlyStopConfig::default()),
            oversample: false,
            seed: 0,
        };
        match (model, condition) {
            (ModelKind::Cnn, Condition::Ch) => Self {
                window: 3600,
                batch_size: 64,
                epochs: 30,
                lr0: 0.01,
                filters: 128,
                kernel_size: 3,
                dense_units: vec![128, 64, 1],
                ..base
            },
            (ModelKind::Cnn, Condition::All) => Self {
                window: 3600,
                batch_size: 128,
                epochs: 40,
                lr0: 0.005,
                filters: 256,
                kernel_size: 5,
                dense_units: vec![256, 128, 64, 1],
                ..base
            },
            (_, Condition::Ch) => Self {
                window: 1200,
                batch_size: 32,
                epochs: 15,
                lr0: 0.01,
                lstm_units: vec![25],
                dense_units: vec![1],
                ..base
            },
            (_, Condition::All) => Self {
                window: 1200,
                batch_size: 64,
                epochs: 25,
                lr0: 0.005,
                lstm_units: vec![25, 50],
                dense_units: vec![8, 1],
                ..base
            },
        }
    }

    /// Reduced presets for quick runs: `l = 200`, 8 epochs and narrower
    /// layers. Batch sizes, learning rates, kernel sizes and the shape of
    /// each stack follow [`ModelConfig::full`].
    pub fn desk(model: ModelKind, condition: Condition) -> Self {
        let full = Self::full(model, condition);
        let base = Self { window: 200, epochs: 8, ..full };
        match (model, condition) {
            (ModelKind::Cnn, Condition::Ch) => Self { filters: 16, dense_units: vec![32, 16, 1], ..base },
            (ModelKind::Cnn, Condition::All) => Self { filters: 32, dense_units: vec![32, 16, 8, 1], ..base },
            _ => base,
        }
    }

    pub fn preset(model: ModelKind, condition: Condition, desk: bool) -> Self {
        if desk {
            Self::desk(model, condition)
        } else {
            Self::full(model, condition)
        }
    }

    pub fn with_pooling(mut self, pool_size: usize) -> Self {
        self.pooling = Some(pool_size);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.window == 0 || self.batch_size == 0 || self.epochs == 0 {
            return fail("window, batch_size and epochs must be >= 1".into());
        }
        if !(self.lr0.is_finite() && self.lr0 > 0.0) {
            return fail(format!("lr0 must be > 0, got {}", self.lr0));
        }
        if self.dense_units.last() != Some(&1) {
            return fail(format!("dense stack {:?} must end with a single unit", self.dense_units));
        }
        if self.dense_units.contains(&0) {
            return fail("dense layers need at least one unit".into());
        }
        match self.model {
            ModelKind::Cnn => {
                if self.filters == 0 || self.kernel_size == 0 {
                    return fail("CNN needs filters and kernel_size >= 1".into());
                }
                if self.kernel_size > self.window {
                    return fail(format!("kernel size {} exceeds window {}", self.kernel_size, self.window));
                }
                if let Some(p) = self.pooling {
                    let conv_len = self.window - self.kernel_size + 1;
                    if p == 0 || p > conv_len {
                        return fail(format!("pool size {p} does not fit a {conv_len}-step feature map"));
                    }
                }
                if !self.lstm_units.is_empty() {
                    return fail("CNN config must not set lstm_units".into());
                }
            }
            ModelKind::Lstm | ModelKind::BiLstm => {
                if self.lstm_units.is_empty() || self.lstm_units.len() > 2 || self.lstm_units.contains(&0) {
                    return fail(format!("expected one or two recurrent layer sizes, got {:?}", self.lstm_units));
                }
                if self.pooling.is_some() {
                    return fail("pooling only applies to the CNN".into());
                }
            }
        }
        Ok(())
    }

    /// The layer stack this config describes.
    pub fn layer_specs(&self) -> Result<Vec<LayerSpec>> {
        self.validate()?;
        let mut specs = Vec::new();
        match self.model {
            ModelKind::Cnn => {
                specs.push(LayerSpec::conv1d(self.filters, self.kernel_size));
                if let Some(pool_size) = self.pooling {
                    specs.push(LayerSpec::Maxpool1d { pool_size });
                }
                specs.push(LayerSpec::Flatten);
            }
            ModelKind::Lstm | ModelKind::BiLstm => {
                let last = self.lstm_units.len() - 1;
                for (k, &units) in self.lstm_units.iter().enumerate() {
                    let return_sequences = k < last;
                    specs.push(if self.model == ModelKind::Lstm {
                        LayerSpec::Lstm { units, return_sequences }
                    } else {
                        LayerSpec::Bilstm { units, return_sequences }
                    });
                }
            }
        }
        let last = self.dense_units.len() - 1;
        for (k, &units) in self.dense_units.iter().enumerate() {
            let activation = if k == last { Activation::Linear } else { self.dense_activation };
            specs.push(LayerSpec::dense(units, activation));
        }
        Ok(specs)
    }

    pub fn param_count(&self) -> Result<usize> {
        Ok(Network::zeroed(&[self.window, 1], &self.layer_specs()?)?.param_count())
    }

    pub fn name(&self) -> String {
        format!("{}-{}", self.model.label().to_ascii_lowercase(), self.condition)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cnn_ch_preset() {
        let c = ModelConfig::full(ModelKind::Cnn, Condition::Ch);
        assert_eq!((c.window, c.filters, c.kernel_size), (3600, 128, 3));
        assert_eq!(c.dense_units, vec![128, 64, 1]);
        let specs = c.layer_specs().unwrap();
        assert_eq!(specs.len(), 5);
        assert_eq!(*specs.last().unwrap(), LayerSpec::dense(1, Activation::Linear));
    }

    #[test]
    fn lstm_ch_preset() {
        let c = ModelConfig::full(ModelKind::Lstm, Condition::Ch);
        assert_eq!((c.window, c.lstm_units.as_slice(), c.dense_units.as_slice()), (1200, &[25][..], &[1][..]));
        // 4u(d + u + 1) + u + 1
        assert_eq!(c.param_count().unwrap(), 4 * 25 * 27 + 26);
    }

    #[test]
    fn stacked_lstm_all_preset() {
        let specs = ModelConfig::full(ModelKind::BiLstm, Condition::All).layer_specs().unwrap();
        assert_eq!(specs[0], LayerSpec::Bilstm { units: 25, return_sequences: true });
        assert_eq!(specs[1], LayerSpec::Bilstm { units: 50, return_sequences: false });
    }

    #[test]
    fn equal_configs_equal_counts() {
        let a = ModelConfig::desk(ModelKind::Cnn, Condition::All);
        assert_eq!(a.param_count().unwrap(), a.clone().param_count().unwrap());
    }

    #[test]
    fn invalid_configs() {
        let mut c = ModelConfig::desk(ModelKind::Cnn, Condition::Ch);
        c.dense_units = vec![8, 2];
        assert!(c.validate().is_err());
        let c = ModelConfig::desk(ModelKind::Cnn, Condition::Ch).with_pooling(500);
        assert!(c.validate().is_err());
        let mut c = ModelConfig::desk(ModelKind::Lstm, Condition::Ch);
        c.lstm_units = vec![1, 2, 3];
        assert!(c.validate().is_err());
        let c = ModelConfig::desk(ModelKind::Lstm, Condition::Ch).with_pooling(2);
        assert!(c.validate().is_err());
    }

    #[test]
    fn kind_and_condition_parse() {
        assert_eq!("Bi-LSTM".parse::<ModelKind>().unwrap(), ModelKind::BiLstm);
        assert_eq!("all".parse::<Condition>().unwrap(), Condition::All);
        assert!("gru".parse::<ModelKind>().is_err());
    }
}
