//! Hyperparameter selection.
//!
//! Each trial trains one configuration `theta` on one channel and records the
//! validation loss `J(M, theta, tau)` after every epoch, where `J` is the
//! *summed* squared error over the validation split. Because the loss
//! fluctuates from epoch to epoch, configurations are compared on
//!
//! ```text
//! Jbar(M, theta) = 1/(N_tau - 5) * sum_{tau=6}^{N_tau} J(M, theta, tau)
//! ```
//!
//! which skips the first five, still unsettled, epochs. A single-channel
//! (or `all`) selection takes the argmin of `Jbar`; a per-channel selection
//! that must serve every channel takes the argmin of the mean of `Jbar` over
//! the channels. Ties go to the configuration with fewer parameters, then to
//! the earlier trial.
//!
//! The search itself is a seeded random search over a discrete space.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{make_windows, split_chronological, Split, WindowedDataset};
use crate::eval::percentile;
use crate::models::{build_model, fit, Model, ModelConfig, ModelKind};
use crate::trace::OutcomeTrace;
use crate::{rng, Error, Result};

/// Epochs excluded from the epoch-averaged loss.
pub const WARMUP_EPOCHS: usize = 5;

/// `J(M, theta)`: summed squared error of the raw predictions on the
/// validation split.
pub fn validation_objective(model: &Model, data: &WindowedDataset) -> Result<f64> {
    let idx = data.indices(Split::Val);
    if idx.is_empty() {
        return Err(Error::Empty("validation split"));
    }
    let preds = model.predict_examples(data, &idx)?;
    let targets: Vec<f64> = idx.iter().map(|&k| data.target(k)).collect();
    crate::nn::sse_loss(&preds, &targets)
}

/// Per-example mean of [`validation_objective`], comparable across
/// validation sets of different sizes.
pub fn validation_objective_mean(model: &Model, data: &WindowedDataset) -> Result<f64> {
    Ok(validation_objective(model, data)? / data.count(Split::Val) as f64)
}

/// Mean of the per-epoch losses from epoch 6 onwards.
pub fn epoch_avg_loss(losses: &[f64]) -> Result<f64> {
    if losses.len() <= WARMUP_EPOCHS {
        return Err(Error::TooFewEpochs(losses.len()));
    }
    let tail = &losses[WARMUP_EPOCHS..];
    Ok(tail.iter().sum::<f64>() / tail.len() as f64)
}

/// Index of the smallest loss; ties broken by fewer parameters, then by
/// position. NaN losses are skipped.
pub fn argmin_with_ties(candidates: &[(f64, usize)]) -> Option<usize> {
    candidates
        .iter()
        .enumerate()
        .filter(|(_, (loss, _))| !loss.is_nan())
        .min_by(|(ia, (la, pa)), (ib, (lb, pb))| la.total_cmp(lb).then(pa.cmp(pb)).then(ia.cmp(ib)))
        .map(|(i, _)| i)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: usize,
    /// Identifies `theta`: trials sharing a candidate share a config.
    pub candidate: usize,
    pub channel: String,
    pub config: ModelConfig,
    pub param_count: usize,
    /// `J(M, theta, tau)` for each epoch that ran.
    pub val_losses: Vec<f64>,
    pub lrs: Vec<f64>,
    /// `Jbar(M, theta)`, absent when fewer than 6 epochs ran.
    pub mean_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl TrialRecord {
    pub fn new(
        trial_id: usize,
        candidate: usize,
        channel: impl Into<String>,
        config: ModelConfig,
        param_count: usize,
        val_losses: Vec<f64>,
        lrs: Vec<f64>,
    ) -> Self {
        let mean_loss = epoch_avg_loss(&val_losses).ok();
        Self {
            trial_id,
            candidate,
            channel: channel.into(),
            config,
            param_count,
            val_losses,
            lrs,
            mean_loss,
            error: None,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.error.is_none() && self.mean_loss.is_some()
    }
}

/// Best trial by `Jbar` among the valid ones.
pub fn select_best_single(trials: &[TrialRecord]) -> Result<&TrialRecord> {
    let valid: Vec<&TrialRecord> = trials.iter().filter(|t| t.is_valid()).collect();
    let scores: Vec<(f64, usize)> = valid.iter().map(|t| (t.mean_loss.unwrap(), t.param_count)).collect();
    argmin_with_ties(&scores).map(|i| valid[i]).ok_or(Error::NoValidTrials)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub candidate: usize,
    pub config: ModelConfig,
    pub param_count: usize,
    /// `Jbar` per channel label.
    pub per_channel: BTreeMap<String, f64>,
    /// Mean of `per_channel`.
    pub mean_loss: f64,
}

/// Scores every candidate that has a valid trial on each channel appearing
/// in `trials`; the others are dropped with a warning. Candidates come back
/// in order of first appearance.
pub fn score_candidates(trials: &[TrialRecord]) -> Vec<CandidateScore> {
    let channels: BTreeSet<&str> = trials.iter().map(|t| t.channel.as_str()).collect();
    let mut order = Vec::new();
    let mut groups: HashMap<usize, Vec<&TrialRecord>> = HashMap::new();
    for t in trials {
        groups.entry(t.candidate).or_insert_with(|| {
            order.push(t.candidate);
            Vec::new()
        });
        groups.get_mut(&t.candidate).unwrap().push(t);
    }
    let mut out = Vec::new();
    for candidate in order {
        let group = &groups[&candidate];
        let per_channel: BTreeMap<String, f64> = group
            .iter()
            .filter(|t| t.is_valid())
            .map(|t| (t.channel.clone(), t.mean_loss.unwrap()))
            .collect();
        if per_channel.len() != channels.len() {
            let missing: Vec<&str> =
                channels.iter().copied().filter(|c| !per_channel.contains_key(*c)).collect();
            log::warn!("candidate {candidate} excluded: no valid trial on {}", missing.join(", "));
            continue;
        }
        let mean_loss = per_channel.values().sum::<f64>() / per_channel.len() as f64;
        out.push(CandidateScore {
            candidate,
            config: group[0].config.clone(),
            param_count: group[0].param_count,
            per_channel,
            mean_loss,
        });
    }
    out
}

/// Candidate minimizing the channel-averaged `Jbar`.
pub fn select_best_multichannel(trials: &[TrialRecord]) -> Result<CandidateScore> {
    let scores = score_candidates(trials);
    let keys: Vec<(f64, usize)> = scores.iter().map(|s| (s.mean_loss, s.param_count)).collect();
    argmin_with_ties(&keys).map(|i| scores[i].clone()).ok_or(Error::NoValidTrials)
}

/// Candidate values per hyperparameter; an empty list keeps the base value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub base: ModelConfig,
    #[serde(default)]
    pub window: Vec<usize>,
    #[serde(default)]
    pub batch_size: Vec<usize>,
    #[serde(default)]
    pub epochs: Vec<usize>,
    #[serde(default)]
    pub lr0: Vec<f64>,
    #[serde(default)]
    pub filters: Vec<usize>,
    #[serde(default)]
    pub kernel_size: Vec<usize>,
    #[serde(default)]
    pub lstm_units: Vec<Vec<usize>>,
    #[serde(default)]
    pub dense_units: Vec<Vec<usize>>,
}

impl SearchSpace {
    pub fn fixed(base: ModelConfig) -> Self {
        Self {
            base,
            window: Vec::new(),
            batch_size: Vec::new(),
            epochs: Vec::new(),
            lr0: Vec::new(),
            filters: Vec::new(),
            kernel_size: Vec::new(),
            lstm_units: Vec::new(),
            dense_units: Vec::new(),
        }
    }

    /// A space around `base` (normally a preset): learning rate in
    /// {2, 1, 0.5} x `lr0`, and filters in {0.5, 1, 2} x base (CNN) or
    /// recurrent units in {25, 50} (LSTM / Bi-LSTM).
    pub fn around(base: ModelConfig) -> Self {
        let lr = base.lr0;
        let mut space = Self { lr0: vec![2.0 * lr, lr, 0.5 * lr], ..Self::fixed(base.clone()) };
        match base.model {
            ModelKind::Cnn => {
                let f = base.filters;
                space.filters = vec![(f / 2).max(1), f, 2 * f];
            }
            ModelKind::Lstm | ModelKind::BiLstm => {
                let n = base.lstm_units.len();
                space.lstm_units = [25usize, 50].iter().map(|&u| {
                    let mut units = base.lstm_units.clone();
                    units[n - 1] = u;
                    units
                }).collect();
            }
        }
        space
    }

    pub fn size(&self) -> usize {
        [
            self.window.len(),
            self.batch_size.len(),
            self.epochs.len(),
            self.lr0.len(),
            self.filters.len(),
            self.kernel_size.len(),
            self.lstm_units.len(),
            self.dense_units.len(),
        ]
        .iter()
        .map(|&n| n.max(1))
        .product()
    }

    pub fn sample(&self, rng: &mut rng::Rng) -> ModelConfig {
        fn pick<T: Clone>(values: &[T], current: &T, rng: &mut rng::Rng) -> T {
            values.choose(rng).cloned().unwrap_or_else(|| current.clone())
        }
        let b = &self.base;
        ModelConfig {
            window: pick(&self.window, &b.window, rng),
            batch_size: pick(&self.batch_size, &b.batch_size, rng),
            epochs: pick(&self.epochs, &b.epochs, rng),
            lr0: pick(&self.lr0, &b.lr0, rng),
            filters: pick(&self.filters, &b.filters, rng),
            kernel_size: pick(&self.kernel_size, &b.kernel_size, rng),
            lstm_units: pick(&self.lstm_units, &b.lstm_units, rng),
            dense_units: pick(&self.dense_units, &b.dense_units, rng),
            ..b.clone()
        }
    }
}

/// Data the search trains on: one entry per channel label. An entry with
/// several traces (the `all` condition) is split per trace and concatenated.
#[derive(Debug, Clone)]
pub struct ChannelData {
    pub label: String,
    pub traces: Vec<Arc<OutcomeTrace>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataParams {
    pub horizon: usize,
    pub stride: usize,
    pub fractions: [f64; 3],
}

impl ChannelData {
    pub fn dataset(&self, window: usize, params: &DataParams) -> Result<WindowedDataset> {
        let parts = self
            .traces
            .iter()
            .map(|t| split_chronological(&make_windows(t.clone(), window, params.horizon, params.stride)?, params.fractions))
            .collect::<Result<Vec<_>>>()?;
        WindowedDataset::concat(&parts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSettings {
    pub budget: usize,
    pub seed: u64,
    /// Trials run concurrently; 0 uses every core.
    pub jobs: usize,
}

/// Distribution of one candidate's per-epoch losses on one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxPlot {
    pub candidate: usize,
    pub channel: String,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
    /// `Jbar`, when defined.
    pub mean_loss: Option<f64>,
}

impl BoxPlot {
    pub fn from_trial(t: &TrialRecord) -> Option<Self> {
        let v = &t.val_losses;
        if v.is_empty() {
            return None;
        }
        let q = |p| percentile(v, p).ok();
        Some(Self {
            candidate: t.candidate,
            channel: t.channel.clone(),
            min: q(0.0)?,
            q1: q(25.0)?,
            median: q(50.0)?,
            q3: q(75.0)?,
            max: q(100.0)?,
            mean: v.iter().sum::<f64>() / v.len() as f64,
            mean_loss: t.mean_loss,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub trials: Vec<TrialRecord>,
    /// Valid candidates, best first.
    pub ranking: Vec<CandidateScore>,
    pub best: ModelConfig,
    pub boxplots: Vec<BoxPlot>,
}

impl SearchOutcome {
    /// `trial_id,channel,epoch,val_loss,lr`, with `val_loss` the summed
    /// validation error `J`.
    pub fn trial_ledger_csv(&self) -> String {
        let mut s = String::from("trial_id,channel,epoch,val_loss,lr\n");
        for t in &self.trials {
            for (e, (loss, lr)) in t.val_losses.iter().zip(&t.lrs).enumerate() {
                s.push_str(&format!("{},{},{},{:?},{:?}\n", t.trial_id, t.channel, e + 1, loss, lr));
            }
        }
        s
    }

    pub fn boxplot_csv(&self) -> String {
        let mut s = String::from("candidate,channel,min,q1,median,q3,max,mean,mean_loss\n");
        for b in &self.boxplots {
            s.push_str(&format!(
                "{},{},{:?},{:?},{:?},{:?},{:?},{:?},{}\n",
                b.candidate,
                b.channel,
                b.min,
                b.q1,
                b.median,
                b.q3,
                b.max,
                b.mean,
                b.mean_loss.map(|v| format!("{v:?}")).unwrap_or_default()
            ));
        }
        s
    }

    pub fn summary_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Row<'a> {
            rank: usize,
            #[serde(flatten)]
            score: &'a CandidateScore,
        }
        let rows: Vec<Row<'_>> = self.ranking.iter().enumerate().map(|(i, s)| Row { rank: i + 1, score: s }).collect();
        Ok(serde_json::to_string_pretty(&rows)?)
    }
}

/// Samples `budget` distinct configurations (fewer if the space is smaller),
/// trains each on every channel, and ranks them by channel-averaged `Jbar`.
pub fn search(
    space: &SearchSpace,
    channels: &[ChannelData],
    data: &DataParams,
    settings: SearchSettings,
) -> Result<SearchOutcome> {
    if settings.budget == 0 {
        return Err(Error::Config("search budget must be >= 1".into()));
    }
    if channels.is_empty() {
        return Err(Error::Empty("channel list"));
    }
    let mut rng = rng::seeded(settings.seed);
    let mut candidates: Vec<ModelConfig> = Vec::new();
    let target = settings.budget.min(space.size());
    let mut attempts = 0;
    while candidates.len() < target && attempts < 100 * settings.budget {
        attempts += 1;
        let mut cfg = space.sample(&mut rng);
        cfg.seed = rng::derive(settings.seed, candidates.len() as u64);
        if !candidates.iter().any(|c| ModelConfig { seed: cfg.seed, ..c.clone() } == cfg) {
            candidates.push(cfg);
        }
    }

    let mut windows: Vec<usize> = candidates.iter().map(|c| c.window).collect();
    windows.sort_unstable();
    windows.dedup();
    let mut datasets: HashMap<(usize, usize), WindowedDataset> = HashMap::new();
    for &w in &windows {
        for (ch, c) in channels.iter().enumerate() {
            datasets.insert((w, ch), c.dataset(w, data)?);
        }
    }

    let jobs: Vec<(usize, usize)> = (0..candidates.len())
        .flat_map(|cand| (0..channels.len()).map(move |ch| (cand, ch)))
        .collect();
    let run = |&(cand, ch): &(usize, usize)| -> TrialRecord {
        let cfg = &candidates[cand];
        let trial_id = cand * channels.len() + ch;
        let label = channels[ch].label.clone();
        // Trials run every epoch so the epoch-averaged loss is always
        // defined; early stopping applies only to the final training run.
        let full = ModelConfig { early_stopping: None, ..cfg.clone() };
        let result = build_model(&full).and_then(|m| {
            let params = m.param_count();
            fit(m, &datasets[&(cfg.window, ch)]).map(|t| (params, t))
        });
        match result {
            Ok((params, trained)) => TrialRecord::new(
                trial_id,
                cand,
                label,
                cfg.clone(),
                params,
                trained.val_sse_series(),
                trained.history.iter().map(|h| h.lr).collect(),
            ),
            Err(e) => {
                let mut t = TrialRecord::new(trial_id, cand, label, cfg.clone(), 0, Vec::new(), Vec::new());
                t.error = Some(e.to_string());
                t
            }
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.jobs)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let trials: Vec<TrialRecord> = pool.install(|| jobs.par_iter().map(run).collect());

    if trials.iter().all(|t| t.error.is_some()) {
        return Err(Error::AllTrialsFailed(trials));
    }
    let mut ranking = score_candidates(&trials);
    ranking.sort_by(|a, b| {
        a.mean_loss
            .total_cmp(&b.mean_loss)
            .then(a.param_count.cmp(&b.param_count))
            .then(a.candidate.cmp(&b.candidate))
    });
    let best = ranking.first().ok_or(Error::NoValidTrials)?.config.clone();
    let boxplots = trials.iter().filter_map(BoxPlot::from_trial).collect();
    Ok(SearchOutcome { trials, ranking, best, boxplots })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Condition;

    fn trial(id: usize, cand: usize, ch: &str, losses: &[f64], params: usize) -> TrialRecord {
        let cfg = ModelConfig::desk(ModelKind::Cnn, Condition::Ch).with_seed(cand as u64);
        TrialRecord::new(id, cand, ch, cfg, params, losses.to_vec(), vec![0.01; losses.len()])
    }

    #[test]
    fn epoch_average_examples() {
        assert!((epoch_avg_loss(&[0.7; 12]).unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(epoch_avg_loss(&[9.0, 9.0, 9.0, 9.0, 9.0, 3.0, 2.0, 1.0]).unwrap(), 2.0);
        assert_eq!(
            epoch_avg_loss(&[100.0, -4.0, 1e9, 0.0, 7.0, 3.0, 2.0, 1.0]).unwrap(),
            epoch_avg_loss(&[9.0, 9.0, 9.0, 9.0, 9.0, 3.0, 2.0, 1.0]).unwrap()
        );
        assert!(matches!(epoch_avg_loss(&[1.0; 5]), Err(Error::TooFewEpochs(5))));
    }

    #[test]
    fn objective_sum_examples() {
        let p = [0.5, 0.7];
        let t = [0.4, 1.0];
        assert!((crate::nn::sse_loss(&p, &t).unwrap() - 0.10).abs() < 1e-15);
    }

    #[test]
    fn single_selection() {
        let trials = vec![trial(0, 0, "ch1", &[2.0; 6], 10)];
        assert_eq!(select_best_single(&trials).unwrap().trial_id, 0);
        let trials = vec![
            trial(0, 0, "ch1", &[2.0; 6], 10),
            trial(1, 1, "ch1", &[1.5; 6], 10),
            trial(2, 2, "ch1", &[1.7; 6], 10),
        ];
        assert_eq!(select_best_single(&trials).unwrap().trial_id, 1);
        let scaled: Vec<_> = trials
            .iter()
            .map(|t| trial(t.trial_id, t.candidate, "ch1", &t.val_losses.iter().map(|v| v * 3.5).collect::<Vec<_>>(), 10))
            .collect();
        assert_eq!(select_best_single(&scaled).unwrap().trial_id, 1);
        assert!(matches!(select_best_single(&[trial(0, 0, "ch1", &[1.0; 3], 1)]), Err(Error::NoValidTrials)));
    }

    #[test]
    fn tie_breaks() {
        assert_eq!(argmin_with_ties(&[(1.0, 50), (1.0, 20), (1.0, 20)]), Some(1));
        assert_eq!(argmin_with_ties(&[(f64::NAN, 1), (3.0, 5)]), Some(1));
        assert_eq!(argmin_with_ties(&[]), None);
    }

    #[test]
    fn multichannel_tie_goes_to_smaller_model() {
        let chans = ["ch1", "ch5", "ch9", "ch13"];
        let mut trials = Vec::new();
        for (k, (&a, &b)) in [1.0, 1.0, 1.0, 5.0].iter().zip(&[2.0, 2.0, 2.0, 2.0]).enumerate() {
            trials.push(trial(trials.len(), 0, chans[k], &[a; 6], 500));
            trials.push(trial(trials.len(), 1, chans[k], &[b; 6], 100));
        }
        let best = select_best_multichannel(&trials).unwrap();
        assert_eq!(best.candidate, 1);
        assert_eq!(best.mean_loss, 2.0);
        trials.reverse();
        assert_eq!(select_best_multichannel(&trials).unwrap().candidate, 1);
    }

    #[test]
    fn candidate_missing_a_channel_is_excluded() {
        let trials = vec![
            trial(0, 0, "ch1", &[1.0; 6], 1),
            trial(1, 0, "ch5", &[1.0; 6], 1),
            trial(2, 1, "ch1", &[0.1; 6], 1),
            trial(3, 1, "ch5", &[0.1; 4], 1),
        ];
        assert_eq!(select_best_multichannel(&trials).unwrap().candidate, 0);
    }

    #[test]
    fn space_sampling_stays_in_space() {
        let space = SearchSpace::around(ModelConfig::desk(ModelKind::Cnn, Condition::Ch));
        assert_eq!(space.size(), 9);
        let mut r = rng::seeded(3);
        for _ in 0..50 {
            let c = space.sample(&mut r);
            assert!([8, 16, 32].contains(&c.filters));
            assert!(space.lr0.contains(&c.lr0));
        }
        let space = SearchSpace::around(ModelConfig::desk(ModelKind::Lstm, Condition::All));
        assert_eq!(space.lstm_units, vec![vec![25, 25], vec![25, 50]]);
    }

    #[test]
    fn boxplot_quartiles() {
        let t = trial(0, 0, "ch1", &[5.0, 1.0, 4.0, 2.0, 3.0, 6.0, 7.0, 8.0], 1);
        let b = BoxPlot::from_trial(&t).unwrap();
        assert_eq!((b.min, b.q1, b.median, b.q3, b.max), (1.0, 2.0, 4.0, 6.0, 8.0));
        assert_eq!(b.mean, 4.5);
        assert_eq!(b.mean_loss, Some(7.0));
    }
}
