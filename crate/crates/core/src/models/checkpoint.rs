//! Checkpoints and training run directories.
//!
//! A checkpoint is a JSON document holding the model config, the layer
//! stack with every parameter tensor (shape plus row-major values), the
//! training history and the best epoch. Floats are written in shortest
//! round-trip form, so save/load is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, TrainedModel};
use crate::nn::Network;
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "linkfdr-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointMeta {
    epoch: usize,
    lr: f64,
    seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    meta: CheckpointMeta,
    #[serde(flatten)]
    trained: TrainedModel,
}

impl TrainedModel {
    pub fn to_checkpoint_json(&self) -> Result<String> {
        let lr = self
            .history
            .iter()
            .find(|h| h.epoch == self.best_epoch)
            .map_or(self.model.config.lr0, |h| h.lr);
        let ckpt = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            meta: CheckpointMeta { epoch: self.best_epoch, lr, seed: self.model.config.seed },
            trained: self.clone(),
        };
        Ok(serde_json::to_string(&ckpt)?)
    }

    pub fn from_checkpoint_json(s: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(s)?;
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                ckpt.format, ckpt.version
            )));
        }
        check_network(&ckpt.trained.model)?;
        Ok(ckpt.trained)
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_checkpoint_json()?)?;
        Ok(())
    }

    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint_json(&fs::read_to_string(path)?)
    }

    /// Writes `config.json`, `history.csv` and `checkpoint.json` into `dir`.
    pub fn write_run_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join("config.json"), serde_json::to_string_pretty(&self.model.config)?)?;
        fs::write(dir.join("history.csv"), self.history_csv())?;
        self.save_checkpoint(dir.join("checkpoint.json"))
    }
}

/// The stored stack must be exactly what the stored config builds.
fn check_network(model: &Model) -> Result<()> {
    let expected = Network::zeroed(&[model.config.window, 1], &model.config.layer_specs()?)?;
    if expected.input_shape() != model.network.input_shape()
        || expected.layers().len() != model.network.layers().len()
    {
        return Err(Error::Checkpoint("layer stack does not match the config".into()));
    }
    for (want, got) in expected.layers().iter().zip(model.network.layers()) {
        let same = want.spec == got.spec
            && want.input_shape == got.input_shape
            && want.output_shape == got.output_shape
            && want.params.len() == got.params.len()
            && want.params.iter().zip(&got.params).all(|(a, b)| {
                a.shape() == b.shape() && b.len() == b.shape().iter().product::<usize>()
            });
        if !same {
            return Err(Error::Checkpoint(format!("{} layer does not match the config", got.spec.kind())));
        }
        if got.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Checkpoint("non-finite parameter".into()));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_model, Condition, EpochRecord, ModelConfig, ModelKind};

    fn trained(kind: ModelKind, seed: u64) -> TrainedModel {
        let cfg = ModelConfig { window: 30, ..ModelConfig::desk(kind, Condition::All) }.with_seed(seed);
        TrainedModel {
            model: build_model(&cfg).unwrap(),
            history: vec![EpochRecord { epoch: 1, train_loss: 0.1, val_loss: 0.2, val_sse: 4.0, lr: 0.005 }],
            best_epoch: 1,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for kind in ModelKind::ALL {
            let t = trained(kind, 3);
            let back = TrainedModel::from_checkpoint_json(&t.to_checkpoint_json().unwrap()).unwrap();
            assert_eq!(back, t);
            for (a, b) in back.model.network.params().zip(t.model.network.params()) {
                assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
            }
        }
    }

    #[test]
    fn rejects_tampered_checkpoints() {
        let t = trained(ModelKind::Cnn, 1);
        let json = t.to_checkpoint_json().unwrap();
        assert!(TrainedModel::from_checkpoint_json(&json.replace(CHECKPOINT_FORMAT, "other")).is_err());
        let mut bad = t.clone();
        bad.model.config.filters += 1;
        assert!(TrainedModel::from_checkpoint_json(&bad.to_checkpoint_json().unwrap()).is_err());
    }

    #[test]
    fn run_dir_layout() {
        let dir = tempfile::tempdir().unwrap();
        let t = trained(ModelKind::Lstm, 2);
        t.write_run_dir(dir.path()).unwrap();
        for f in ["config.json", "history.csv", "checkpoint.json"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        assert_eq!(TrainedModel::load_checkpoint(dir.path().join("checkpoint.json")).unwrap(), t);
    }
}
