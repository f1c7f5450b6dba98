use std::path::Path;

use anyhow::{bail, Context, Result};
use linkfdr::models::{Condition, Decay, ModelConfig, ModelKind};
use linkfdr::nn::Activation;
use serde::{Deserialize, Serialize};

/// Options read from `--config`. Every field is optional; anything unset
/// falls back to the preset.
#[derive(Debug, Default, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub desk_scale: Option<bool>,
    pub simulate: SimulateOverrides,
    pub data: DataOverrides,
    pub model: ModelOverrides,
    pub search: SearchOverrides,
}

#[derive(Debug, Default, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateOverrides {
    pub preset: Option<String>,
    pub samples: Option<usize>,
}

#[derive(Debug, Default, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataOverrides {
    pub window: Option<usize>,
    pub horizon: Option<usize>,
    pub stride: Option<usize>,
    pub fractions: Option<[f64; 3]>,
}

#[derive(Debug, Default, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelOverrides {
    pub model: Option<ModelKind>,
    pub condition: Option<Condition>,
    pub window: Option<usize>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub lr0: Option<f64>,
    pub decay: Option<Decay>,
    pub filters: Option<usize>,
    pub kernel_size: Option<usize>,
    pub pooling: Option<usize>,
    pub lstm_units: Option<Vec<usize>>,
    pub dense_units: Option<Vec<usize>>,
    pub dense_activation: Option<Activation>,
    pub early_stopping: Option<bool>,
    pub oversample: Option<bool>,
}

/// Search-space lists; an unset list keeps the default space around the
/// preset.
#[derive(Debug, Default, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchOverrides {
    pub budget: Option<usize>,
    pub window: Option<Vec<usize>>,
    pub batch_size: Option<Vec<usize>>,
    pub epochs: Option<Vec<usize>>,
    pub lr0: Option<Vec<f64>>,
    pub filters: Option<Vec<usize>>,
    pub kernel_size: Option<Vec<usize>>,
    pub lstm_units: Option<Vec<Vec<usize>>>,
    pub dense_units: Option<Vec<Vec<usize>>>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let parsed = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).map_err(anyhow::Error::from),
            Some("toml") => toml::from_str(&text).map_err(anyhow::Error::from),
            _ => bail!("config {} must end in .toml or .json", path.display()),
        };
        parsed.with_context(|| format!("parsing config {}", path.display()))
    }
}

impl ModelOverrides {
    /// Field-wise `self` where set, otherwise `fallback`.
    pub fn or(self, fallback: &ModelOverrides) -> ModelOverrides {
        let f = fallback.clone();
        ModelOverrides {
            model: self.model.or(f.model),
            condition: self.condition.or(f.condition),
            window: self.window.or(f.window),
            batch_size: self.batch_size.or(f.batch_size),
            epochs: self.epochs.or(f.epochs),
            lr0: self.lr0.or(f.lr0),
            decay: self.decay.or(f.decay),
            filters: self.filters.or(f.filters),
            kernel_size: self.kernel_size.or(f.kernel_size),
            pooling: self.pooling.or(f.pooling),
            lstm_units: self.lstm_units.or(f.lstm_units),
            dense_units: self.dense_units.or(f.dense_units),
            dense_activation: self.dense_activation.or(f.dense_activation),
            early_stopping: self.early_stopping.or(f.early_stopping),
            oversample: self.oversample.or(f.oversample),
        }
    }

    /// The preset for the chosen model and condition with every set field
    /// applied on top.
    pub fn resolve(&self, desk: bool, seed: u64) -> Result<ModelConfig> {
        let model = self.model.unwrap_or(ModelKind::Cnn);
        let condition = self.condition.unwrap_or(Condition::Ch);
        let mut cfg = ModelConfig::preset(model, condition, desk).with_seed(seed);
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field.clone() {
                    cfg.$field = v;
                }
            )*};
        }
        set!(window, batch_size, epochs, lr0, decay, filters, kernel_size, lstm_units, dense_units, dense_activation, oversample);
        if self.pooling.is_some() {
            cfg.pooling = self.pooling;
        }
        if self.early_stopping == Some(false) {
            cfg.early_stopping = None;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn window_is_set(&self) -> bool {
        self.window.is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_is_cli_then_file_then_preset() {
        let file = ModelOverrides { epochs: Some(3), lr0: Some(0.5), ..Default::default() };
        let cli = ModelOverrides { lr0: Some(0.25), ..Default::default() };
        let cfg = cli.or(&file).resolve(true, 9).unwrap();
        assert_eq!((cfg.epochs, cfg.lr0, cfg.batch_size, cfg.seed), (3, 0.25, 64, 9));
    }

    #[test]
    fn toml_sections_parse() {
        let cfg: FileConfig = toml::from_str(
            "seed = 4\n[model]\nmodel = \"bilstm\"\nlstm_units = [25, 50]\n[data]\nfractions = [0.5, 0.25, 0.25]\n[search]\nlr0 = [0.01, 0.02]\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, Some(4));
        assert_eq!(cfg.model.model, Some(ModelKind::BiLstm));
        assert_eq!(cfg.data.fractions, Some([0.5, 0.25, 0.25]));
        assert!(toml::from_str::<FileConfig>("bogus = 1").is_err());
    }

    #[test]
    fn pooling_conflict_is_rejected() {
        let o = ModelOverrides { window: Some(3), kernel_size: Some(3), pooling: Some(2), ..Default::default() };
        assert!(o.resolve(true, 0).is_err());
    }
}
