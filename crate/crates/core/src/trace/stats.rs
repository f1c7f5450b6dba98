use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::OutcomeTrace;

/// Summary of one channel's trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStats {
    pub samples: usize,
    pub mean_fdr: f64,
    /// Population standard deviation of the FDR over disjoint windows.
    pub std_fdr: f64,
    pub window: usize,
    pub windows: usize,
    /// Run length -> number of runs of consecutive failures.
    pub zero_runs: BTreeMap<usize, usize>,
    /// Run length -> number of runs of consecutive successes.
    pub one_runs: BTreeMap<usize, usize>,
}

impl TraceStats {
    pub fn max_zero_run(&self) -> usize {
        self.zero_runs.keys().next_back().copied().unwrap_or(0)
    }

    pub fn max_one_run(&self) -> usize {
        self.one_runs.keys().next_back().copied().unwrap_or(0)
    }

    pub fn max_run(&self) -> usize {
        self.max_zero_run().max(self.max_one_run())
    }
}

/// Mean FDR, spread of the FDR over disjoint `window`-sample blocks (the
/// trailing partial block is ignored, a trace shorter than one block counts
/// as a single block) and run-length histograms.
pub fn trace_stats(trace: &OutcomeTrace, window: usize) -> TraceStats {
    let x = trace.outcomes();
    let window = window.max(1);
    let mut means: Vec<f64> = x
        .chunks_exact(window)
        .map(|c| c.iter().map(|&v| v as u64).sum::<u64>() as f64 / window as f64)
        .collect();
    if means.is_empty() {
        means.push(trace.mean());
    }
    let mu = means.iter().sum::<f64>() / means.len() as f64;
    let var = means.iter().map(|m| (m - mu).powi(2)).sum::<f64>() / means.len() as f64;

    let mut zero_runs = BTreeMap::new();
    let mut one_runs = BTreeMap::new();
    let mut start = 0;
    for i in 1..=x.len() {
        if i == x.len() || x[i] != x[start] {
            let runs = if x[start] == 0 { &mut zero_runs } else { &mut one_runs };
            *runs.entry(i - start).or_insert(0) += 1;
            start = i;
        }
    }

    TraceStats {
        samples: x.len(),
        mean_fdr: trace.mean(),
        std_fdr: var.sqrt(),
        window,
        windows: means.len(),
        zero_runs,
        one_runs,
    }
}
