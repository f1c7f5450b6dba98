//! Supervised examples built from outcome traces.
//!
//! Example `i` pairs the input window `x[i-l+1..=i]` (the `l` most recent
//! outcomes, current one included) with the target
//!
//! ```text
//! t_i = (x[i+1] + ... + x[i+N_f]) / N_f
//! ```
//!
//! i.e. the delivery ratio of the next `N_f` attempts. The current outcome is
//! never part of its own target.
//!
//! Splits are chronological: train, then validation, then test. Between two
//! consecutive blocks a guard gap of examples is dropped so that no trace
//! sample feeds examples on both sides of a boundary, neither through an
//! input window nor through a target horizon.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::trace::OutcomeTrace;
use crate::{Error, Result};

/// 30 minutes of 0.5 s samples.
pub const DEFAULT_HORIZON: usize = 3600;
pub const DEFAULT_FRACTIONS: [f64; 3] = [0.6, 0.2, 0.2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Mean of `x[i+1..=i+horizon]`.
pub fn fdr_target(trace: &OutcomeTrace, i: usize, horizon: usize) -> Result<f64> {
    if horizon == 0 {
        return Err(Error::Config("horizon N_f must be >= 1".into()));
    }
    let x = trace.outcomes();
    if i.checked_add(horizon).map_or(true, |end| end >= x.len()) {
        return Err(Error::OutOfRange { index: i, horizon, len: x.len() });
    }
    let ones: u64 = x[i + 1..=i + horizon].iter().map(|&v| v as u64).sum();
    Ok(ones as f64 / horizon as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Example {
    /// Which source trace the example reads from.
    pub source: usize,
    /// Index of the last input sample (the current time instant `i`).
    pub end: usize,
    pub target: f64,
    pub split: Option<Split>,
}

/// How one source trace was split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceLayout {
    pub hash: String,
    pub channel_id: u32,
    pub samples: usize,
    /// Examples produced by windowing, before any were dropped.
    pub windowed: usize,
    /// Examples dropped at each boundary between two nonempty blocks.
    pub gap: usize,
    pub train: BlockRange,
    pub val: BlockRange,
    pub test: BlockRange,
}

impl SourceLayout {
    pub fn block(&self, split: Split) -> &BlockRange {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// Half-open range of windowed-example positions (before gap removal) plus
/// the raw trace samples those examples read, windows and horizons included.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockRange {
    pub first_example: usize,
    pub end_example: usize,
    /// `None` when the block is empty.
    pub samples: Option<(usize, usize)>,
}

impl BlockRange {
    pub fn len(&self) -> usize {
        self.end_example - self.first_example
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Windowed examples over one or more traces.
///
/// Inputs are views into the source traces; nothing is copied until
/// [`WindowedDataset::input`] is called.
#[derive(Debug, Clone)]
pub struct WindowedDataset {
    sources: Vec<Arc<OutcomeTrace>>,
    window: usize,
    horizon: usize,
    stride: usize,
    examples: Vec<Example>,
    layouts: Vec<SourceLayout>,
    fractions: Option<[f64; 3]>,
}

/// Builds one example per instant `i = l-1, l-1+stride, ...` with
/// `i + N_f <= N - 1`.
pub fn make_windows(
    trace: impl Into<Arc<OutcomeTrace>>,
    window: usize,
    horizon: usize,
    stride: usize,
) -> Result<WindowedDataset> {
    let trace = trace.into();
    if window == 0 || horizon == 0 || stride == 0 {
        return Err(Error::Config(format!(
            "window ({window}), horizon ({horizon}) and stride ({stride}) must all be >= 1"
        )));
    }
    let n = trace.len();
    let min = window + horizon;
    if n < min {
        return Err(Error::NoExamples { len: n, min });
    }
    let x = trace.outcomes();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0u64);
    for &v in x {
        prefix.push(prefix.last().unwrap() + v as u64);
    }
    let examples = (window - 1..n - horizon)
        .step_by(stride)
        .map(|end| Example {
            source: 0,
            end,
            target: (prefix[end + horizon + 1] - prefix[end + 1]) as f64 / horizon as f64,
            split: None,
        })
        .collect();
    Ok(WindowedDataset {
        sources: vec![trace],
        window,
        horizon,
        stride,
        examples,
        layouts: Vec::new(),
        fractions: None,
    })
}

/// Number of examples dropped at a split boundary so that the last sample
/// read by one block (its last target horizon) precedes the first sample read
/// by the next block (its first input window).
pub fn guard_gap(window: usize, horizon: usize, stride: usize) -> usize {
    (window + horizon).div_ceil(stride) - 1
}

/// Tags the examples of a single-trace dataset train/val/test in time order,
/// dropping a guard gap between consecutive nonempty blocks.
///
/// Block sizes are `floor` of the cumulative fractions of the examples left
/// after the gaps, the last requested block taking the remainder.
pub fn split_chronological(dataset: &WindowedDataset, fractions: [f64; 3]) -> Result<WindowedDataset> {
    if dataset.sources.len() != 1 || dataset.is_split() {
        return Err(Error::Split("expected an unsplit single-trace dataset".into()));
    }
    if fractions.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
        return Err(Error::Split(format!("fractions {fractions:?} must be nonnegative")));
    }
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Split(format!("fractions {fractions:?} sum to {sum}, expected 1")));
    }
    let n = dataset.examples.len();
    let gap = guard_gap(dataset.window, dataset.horizon, dataset.stride);
    let requested: Vec<usize> = (0..3).filter(|&k| fractions[k] > 0.0).collect();
    let gaps = gap * (requested.len() - 1);
    if n < requested.len() + gaps {
        return Err(Error::Split(format!(
            "{n} examples cannot hold {} nonempty blocks separated by {gaps} guard examples",
            requested.len()
        )));
    }
    for (k, split) in Split::ALL.iter().enumerate() {
        if fractions[k] == 0.0 {
            log::warn!("{split} split is empty (fraction 0)");
        }
    }

    let usable = n - gaps;
    let mut sizes = [0usize; 3];
    let mut cumulative = 0.0;
    let mut assigned = 0;
    for &k in &requested {
        cumulative += fractions[k];
        let upto = if k == *requested.last().unwrap() {
            usable
        } else {
            ((cumulative * usable as f64).floor() as usize).min(usable)
        };
        sizes[k] = upto - assigned;
        assigned = upto;
        if sizes[k] == 0 {
            return Err(Error::Split(format!(
                "{} split would be empty with {n} examples",
                Split::ALL[k]
            )));
        }
    }

    let mut blocks = [BlockRange { first_example: 0, end_example: 0, samples: None }; 3];
    let mut examples = Vec::with_capacity(usable);
    let mut cursor = 0;
    let mut seen_block = false;
    for (k, split) in Split::ALL.iter().enumerate() {
        if sizes[k] == 0 {
            blocks[k] = BlockRange { first_example: cursor, end_example: cursor, samples: None };
            continue;
        }
        if seen_block {
            cursor += gap;
        }
        seen_block = true;
        let range = cursor..cursor + sizes[k];
        let first = &dataset.examples[range.start];
        let last = &dataset.examples[range.end - 1];
        blocks[k] = BlockRange {
            first_example: range.start,
            end_example: range.end,
            samples: Some((first.end + 1 - dataset.window, last.end + dataset.horizon)),
        };
        examples.extend(dataset.examples[range.clone()].iter().map(|e| Example { split: Some(*split), ..*e }));
        cursor = range.end;
    }

    let trace = &dataset.sources[0];
    let [train, val, test] = blocks;
    Ok(WindowedDataset {
        examples,
        layouts: vec![SourceLayout {
            hash: trace.content_hash(),
            channel_id: trace.channel_id(),
            samples: trace.len(),
            windowed: n,
            gap,
            train,
            val,
            test,
        }],
        fractions: Some(fractions),
        ..dataset.clone()
    })
}

impl WindowedDataset {
    pub fn window(&self) -> usize {
        self.window
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn sources(&self) -> &[Arc<OutcomeTrace>] {
        &self.sources
    }

    pub fn layouts(&self) -> &[SourceLayout] {
        &self.layouts
    }

    pub fn fractions(&self) -> Option<[f64; 3]> {
        self.fractions
    }

    pub fn is_split(&self) -> bool {
        self.examples.iter().any(|e| e.split.is_some())
    }

    /// The raw outcomes feeding example `k`.
    pub fn window_bits(&self, k: usize) -> &[u8] {
        let e = &self.examples[k];
        &self.sources[e.source].outcomes()[e.end + 1 - self.window..=e.end]
    }

    /// Example `k`'s input as a 0.0 / 1.0 sequence.
    pub fn input(&self, k: usize) -> Vec<f64> {
        self.window_bits(k).iter().map(|&b| b as f64).collect()
    }

    pub fn target(&self, k: usize) -> f64 {
        self.examples[k].target
    }

    /// Positions of the examples tagged `split`, in time order.
    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.examples
            .iter()
            .enumerate()
            .filter(|(_, e)| e.split == Some(split))
            .map(|(k, _)| k)
            .collect()
    }

    pub fn targets(&self, split: Split) -> Vec<f64> {
        self.indices(split).into_iter().map(|k| self.examples[k].target).collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.examples.iter().filter(|e| e.split == Some(split)).count()
    }

    /// Keeps only the examples whose source is `source`.
    pub fn select_source(&self, source: usize) -> Result<WindowedDataset> {
        let layout = self
            .layouts
            .get(source)
            .cloned()
            .ok_or_else(|| Error::Split(format!("no source {source}")))?;
        let examples = self
            .examples
            .iter()
            .filter(|e| e.source == source)
            .map(|e| Example { source: 0, ..*e })
            .collect();
        Ok(WindowedDataset {
            sources: vec![self.sources[source].clone()],
            examples,
            layouts: vec![layout],
            ..self.clone()
        })
    }

    /// Joins split datasets (one per channel) into one. Each part keeps its
    /// own split; examples are grouped by source in argument order.
    pub fn concat(parts: &[WindowedDataset]) -> Result<WindowedDataset> {
        let first = parts.first().ok_or(Error::Empty("dataset list"))?;
        let mut out = WindowedDataset {
            sources: Vec::new(),
            examples: Vec::new(),
            layouts: Vec::new(),
            ..first.clone()
        };
        for part in parts {
            if (part.window, part.horizon, part.stride) != (first.window, first.horizon, first.stride) {
                return Err(Error::Split("concatenated datasets must share l, N_f and stride".into()));
            }
            if !part.is_split() {
                return Err(Error::Split("split each dataset before concatenating".into()));
            }
            if part.fractions != first.fractions {
                return Err(Error::Split("concatenated datasets must share split fractions".into()));
            }
            let offset = out.sources.len();
            out.sources.extend(part.sources.iter().cloned());
            out.layouts.extend(part.layouts.iter().cloned());
            out.examples
                .extend(part.examples.iter().map(|e| Example { source: e.source + offset, ..*e }));
        }
        Ok(out)
    }

    pub fn manifest(&self) -> Result<DatasetManifest> {
        let fractions = self
            .fractions
            .ok_or_else(|| Error::Split("dataset has not been split".into()))?;
        Ok(DatasetManifest {
            window: self.window,
            horizon: self.horizon,
            stride: self.stride,
            fractions,
            sources: self.layouts.clone(),
        })
    }
}

/// Everything needed to rebuild a split dataset from its traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub window: usize,
    pub horizon: usize,
    pub stride: usize,
    pub fractions: [f64; 3],
    pub sources: Vec<SourceLayout>,
}

impl DatasetManifest {
    /// Rebuilds the dataset, checking each trace's hash and that the split
    /// lands on the recorded ranges.
    pub fn apply(&self, traces: &[Arc<OutcomeTrace>]) -> Result<WindowedDataset> {
        if traces.len() != self.sources.len() {
            return Err(Error::Split(format!(
                "manifest lists {} traces, got {}",
                self.sources.len(),
                traces.len()
            )));
        }
        let mut parts = Vec::with_capacity(traces.len());
        for (trace, layout) in traces.iter().zip(&self.sources) {
            let hash = trace.content_hash();
            if hash != layout.hash {
                return Err(Error::Split(format!(
                    "trace hash {hash} does not match manifest {}",
                    layout.hash
                )));
            }
            let windows = make_windows(trace.clone(), self.window, self.horizon, self.stride)?;
            let split = split_chronological(&windows, self.fractions)?;
            if split.layouts[0] != *layout {
                return Err(Error::Split("rebuilt split differs from manifest".into()));
            }
            parts.push(split);
        }
        WindowedDataset::concat(&parts)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Fractions of failed (`p0`) and successful (`p1`) attempts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassBalance {
    pub p0: f64,
    pub p1: f64,
}

pub fn class_balance(trace: &OutcomeTrace) -> ClassBalance {
    let p1 = trace.mean();
    ClassBalance { p0: 1.0 - p1, p1 }
}

/// Repeats the examples whose current outcome `x_i` belongs to the rarer
/// class until both classes are equally represented. Returns positions into
/// `dataset`, original order first, repeats appended.
pub fn oversample_minority(dataset: &WindowedDataset, indices: &[usize]) -> Vec<usize> {
    let current = |k: usize| *dataset.window_bits(k).last().unwrap();
    let (zeros, ones): (Vec<usize>, Vec<usize>) = indices.iter().partition(|&&k| current(k) == 0);
    let (minority, majority) = if zeros.len() < ones.len() { (zeros, ones) } else { (ones, zeros) };
    let deficit = majority.len() - minority.len();
    let mut out = indices.to_vec();
    if !minority.is_empty() {
        out.extend(minority.iter().cycle().take(deficit));
    }
    out
}
