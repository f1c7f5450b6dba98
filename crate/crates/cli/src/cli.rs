use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use linkfdr::models::{Condition, ModelKind};

use crate::config::ModelOverrides;

/// Frame delivery ratio prediction for Wi-Fi links.
#[derive(Debug, Parser)]
#[command(name = "linkfdr", version, about)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Seed for simulation, initialisation and search.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML or JSON file with option defaults; flags take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    pub force: bool,
    /// Use the reduced presets (l = N_f = 200, 8 epochs).
    #[arg(long, global = true)]
    pub desk_scale: bool,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic outcome traces from a Gilbert-Elliott channel.
    Simulate(SimulateArgs),
    /// Validate a recorded trace and store it in both trace formats.
    Import(ImportArgs),
    /// Window and split traces into a dataset manifest.
    Prepare(PrepareArgs),
    /// Train one model on a prepared dataset.
    Train(TrainArgs),
    /// Random hyperparameter search scored by the epoch-averaged loss.
    Tune(TuneArgs),
    /// Error statistics of trained models on the test split.
    Evaluate(EvaluateArgs),
    /// Single-window inference time and memory.
    Profile(ProfileArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// `calibrated`, `synth-ch1`, `synth-ch5`, `synth-ch9`, `synth-ch13` or `all`.
    #[arg(long)]
    pub preset: Option<String>,
    /// Samples per trace.
    #[arg(short = 'n', long)]
    pub samples: Option<usize>,
    /// Override the Good -> Bad transition probability.
    #[arg(long)]
    pub p_gb: Option<f64>,
    /// Override the Bad -> Good transition probability.
    #[arg(long)]
    pub p_bg: Option<f64>,
    /// Override the loss probability in the Good state.
    #[arg(long)]
    pub e_g: Option<f64>,
    /// Override the loss probability in the Bad state.
    #[arg(long)]
    pub e_b: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    /// Text (`idx,outcome[,...]`) or packed (`.fdr`) trace.
    pub input: PathBuf,
    /// Override the channel id.
    #[arg(long)]
    pub channel: Option<u32>,
    /// Override the sampling period in seconds.
    #[arg(long)]
    pub period: Option<f64>,
    /// Base name of the stored files; defaults to the input's stem.
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Input window length l.
    #[arg(long)]
    pub window: Option<usize>,
    /// Target horizon N_f.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Step between consecutive windows.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Train, validation and test fractions, e.g. `0.6,0.2,0.2`.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub fractions: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Trace files; several are split one by one and concatenated.
    #[arg(required = true)]
    pub traces: Vec<PathBuf>,
    /// Model whose preset window is the default.
    #[arg(long, default_value = "cnn")]
    pub model: ModelKind,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub model: Option<ModelKind>,
    #[arg(long)]
    pub condition: Option<Condition>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Initial learning rate.
    #[arg(long)]
    pub lr0: Option<f64>,
    #[arg(long)]
    pub filters: Option<usize>,
    #[arg(long)]
    pub kernel_size: Option<usize>,
    /// Max-pooling size after the convolution.
    #[arg(long)]
    pub pooling: Option<usize>,
    /// Recurrent layer sizes, e.g. `25,50`.
    #[arg(long, value_delimiter = ',')]
    pub lstm_units: Option<Vec<usize>>,
    /// Dense layer sizes ending in 1, e.g. `128,64,1`.
    #[arg(long, value_delimiter = ',')]
    pub dense_units: Option<Vec<usize>>,
    /// Repeat minority-class examples during training.
    #[arg(long)]
    pub oversample: bool,
}

impl ModelArgs {
    pub fn overrides(&self) -> ModelOverrides {
        ModelOverrides {
            model: self.model,
            condition: self.condition,
            window: self.window,
            batch_size: self.batch_size,
            epochs: self.epochs,
            lr0: self.lr0,
            filters: self.filters,
            kernel_size: self.kernel_size,
            pooling: self.pooling,
            lstm_units: self.lstm_units.clone(),
            dense_units: self.dense_units.clone(),
            oversample: self.oversample.then_some(true),
            ..ModelOverrides::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// `dataset.json` written by `prepare`.
    #[arg(long)]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    /// Trace files. With `--condition ch` each is a channel and the search
    /// minimises the loss averaged over them; with `all` they are pooled.
    #[arg(required = true)]
    pub traces: Vec<PathBuf>,
    /// Configurations to try.
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub fractions: Option<Vec<f64>>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// `dataset.json` written by `prepare`.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Checkpoints to evaluate; repeat for several models.
    #[arg(long = "checkpoint", required = true)]
    pub checkpoints: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    /// Checkpoints to profile; defaults to untrained CNN, LSTM and Bi-LSTM presets.
    #[arg(long = "checkpoint")]
    pub checkpoints: Vec<PathBuf>,
    /// Preset condition when no checkpoint is given.
    #[arg(long, default_value = "ch")]
    pub condition: Condition,
    /// Timed predictions per model (at least 100).
    #[arg(long, default_value_t = 1000)]
    pub repetitions: usize,
}
