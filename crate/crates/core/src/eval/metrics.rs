use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::{Split, WindowedDataset};
use crate::models::Model;
use crate::{Error, Result};

/// Signed errors `prediction - target` for every example of a split, in
/// dataset order, once with raw outputs and once with outputs clamped to
/// `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSeries {
    pub raw: Vec<f64>,
    pub clamped: Vec<f64>,
}

impl ErrorSeries {
    pub fn get(&self, kind: PredictionKind) -> &[f64] {
        match kind {
            PredictionKind::Raw => &self.raw,
            PredictionKind::Clamped => &self.clamped,
        }
    }
}

pub fn error_series(model: &Model, data: &WindowedDataset, split: Split) -> Result<ErrorSeries> {
    let idx = data.indices(split);
    if idx.is_empty() {
        return Err(Error::Empty("evaluation split"));
    }
    let preds = model.predict_examples(data, &idx)?;
    if preds.len() != idx.len() {
        return Err(Error::Shape(format!("{} predictions for {} examples", preds.len(), idx.len())));
    }
    let (raw, clamped) = preds
        .iter()
        .zip(&idx)
        .map(|(&p, &k)| {
            let t = data.target(k);
            (p - t, p.clamp(0.0, 1.0) - t)
        })
        .unzip();
    Ok(ErrorSeries { raw, clamped })
}

/// Nearest-rank percentile: the `ceil(p * n / 100)`-th smallest value
/// (1-based), with `p = 0` giving the minimum.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    let mut sorted = values.to_vec();
    sort_checked(&mut sorted)?;
    percentile_sorted(&sorted, p)
}

fn sort_checked(values: &mut [f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Empty("percentile input"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("percentile input"));
    }
    values.sort_by(f64::total_cmp);
    Ok(())
}

fn percentile_sorted(sorted: &[f64], p: f64) -> Result<f64> {
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::Config(format!("percentile {p} outside [0, 100]")));
    }
    let n = sorted.len();
    let rank = ((p * n as f64) / 100.0).ceil() as usize;
    Ok(sorted[rank.clamp(1, n) - 1])
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Statistics of one error series, stored as plain fractions. `abs_*` are
/// over `|e|`, `e2_*` over `e^2`, `e_*` over the signed errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub n: usize,
    pub mu_e2: f64,
    pub e2_p90: f64,
    pub e2_p95: f64,
    pub e2_p99: f64,
    pub e2_max: f64,
    pub mu_abs: f64,
    /// Population standard deviation of `|e|`.
    pub sigma_abs: f64,
    pub abs_p90: f64,
    pub abs_p95: f64,
    pub abs_p99: f64,
    pub abs_max: f64,
    pub e_min: f64,
    pub e_p5: f64,
    pub e_p95: f64,
    pub e_max: f64,
}

pub fn metrics_report(errors: &[f64]) -> Result<ErrorMetrics> {
    if errors.is_empty() {
        return Err(Error::Empty("error series"));
    }
    if !errors.iter().all(|e| e.is_finite()) {
        return Err(Error::NonFinite("error series"));
    }
    let mut signed = errors.to_vec();
    let mut abs: Vec<f64> = errors.iter().map(|e| e.abs()).collect();
    let mut sq: Vec<f64> = errors.iter().map(|e| e * e).collect();
    let mu_e2 = mean(&sq);
    let mu_abs = mean(&abs);
    let sigma_abs = (abs.iter().map(|a| (a - mu_abs) * (a - mu_abs)).sum::<f64>() / abs.len() as f64).sqrt();
    sort_checked(&mut signed)?;
    sort_checked(&mut abs)?;
    sort_checked(&mut sq)?;
    let p = |v: &[f64], q| percentile_sorted(v, q);
    Ok(ErrorMetrics {
        n: errors.len(),
        mu_e2,
        e2_p90: p(&sq, 90.0)?,
        e2_p95: p(&sq, 95.0)?,
        e2_p99: p(&sq, 99.0)?,
        e2_max: p(&sq, 100.0)?,
        mu_abs,
        sigma_abs,
        abs_p90: p(&abs, 90.0)?,
        abs_p95: p(&abs, 95.0)?,
        abs_p99: p(&abs, 99.0)?,
        abs_max: p(&abs, 100.0)?,
        e_min: p(&signed, 0.0)?,
        e_p5: p(&signed, 5.0)?,
        e_p95: p(&signed, 95.0)?,
        e_max: p(&signed, 100.0)?,
    })
}

/// Report columns, in table order. Squared-error columns are shown in
/// units of 1e-3, all others in percent.
pub const REPORT_COLUMNS: [&str; 15] = [
    "mu_e2", "e2_p90", "e2_p95", "e2_p99", "e2_max", "mu_abs_e", "sigma_abs_e", "abs_e_p90", "abs_e_p95",
    "abs_e_p99", "abs_e_max", "e_min", "e_p5", "e_p95", "e_max",
];

impl ErrorMetrics {
    /// Values in [`REPORT_COLUMNS`] order, in display units.
    pub fn display_values(&self) -> [f64; 15] {
        let m = 1e3;
        let pc = 100.0;
        [
            self.mu_e2 * m,
            self.e2_p90 * m,
            self.e2_p95 * m,
            self.e2_p99 * m,
            self.e2_max * m,
            self.mu_abs * pc,
            self.sigma_abs * pc,
            self.abs_p90 * pc,
            self.abs_p95 * pc,
            self.abs_p99 * pc,
            self.abs_max * pc,
            self.e_min * pc,
            self.e_p5 * pc,
            self.e_p95 * pc,
            self.e_max * pc,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictionKind {
    /// Outputs clamped into `[0, 1]`; the headline numbers.
    Clamped,
    Raw,
}

impl PredictionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Clamped => "clamped",
            Self::Raw => "raw",
        }
    }
}

/// One report line: a model trained under `condition`, tested on
/// `test_channel`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub test_channel: String,
    pub condition: String,
    pub model: String,
    pub prediction: PredictionKind,
    pub metrics: ErrorMetrics,
}

impl MetricsRow {
    pub fn csv_header() -> String {
        format!("test_channel,condition,model,prediction,{}", REPORT_COLUMNS.join(","))
    }

    pub fn csv_line(&self) -> String {
        let mut s = format!("{},{},{},{}", self.test_channel, self.condition, self.model, self.prediction.as_str());
        for v in self.metrics.display_values() {
            write!(s, ",{v}").unwrap();
        }
        s
    }

    pub fn csv(rows: &[MetricsRow]) -> String {
        let mut s = Self::csv_header();
        s.push('\n');
        for r in rows {
            s.push_str(&r.csv_line());
            s.push('\n');
        }
        s
    }

    /// Aligned plain-text table with a units row under the header.
    pub fn text_table(rows: &[MetricsRow]) -> String {
        let mut header: Vec<String> = ["channel", "cond", "model", "pred"].map(String::from).to_vec();
        header.extend(REPORT_COLUMNS.iter().map(|c| c.to_string()));
        let mut units: Vec<String> = vec![String::new(); 4];
        units.extend((0..15).map(|i| if i < 5 { "[1e-3]" } else { "[%]" }.to_string()));
        let mut table = vec![header, units];
        for r in rows {
            let mut line = vec![r.test_channel.clone(), r.condition.clone(), r.model.clone(), r.prediction.as_str().into()];
            line.extend(r.metrics.display_values().iter().map(|v| format!("{v:.3}")));
            table.push(line);
        }
        let widths: Vec<usize> = (0..table[0].len()).map(|c| table.iter().map(|l| l[c].len()).max().unwrap()).collect();
        let mut out = String::new();
        for line in &table {
            let cells: Vec<String> = line
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (cell, &w))| if c < 4 { format!("{cell:<w$}") } else { format!("{cell:>w$}") })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}
