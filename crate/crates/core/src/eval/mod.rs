//! Error statistics over a test split and inference resource profiling.
//!
//! Errors are signed as `prediction - target`: a positive error means the
//! model was optimistic about the link. Percentiles use the nearest-rank
//! definition, so any two implementations agree on them exactly.

mod metrics;
mod profile;

pub use metrics::{
    error_series, metrics_report, percentile, ErrorMetrics, ErrorSeries, MetricsRow, PredictionKind, REPORT_COLUMNS,
};
pub use profile::{profile_inference, profile_csv, CountingAllocator, MemoryMethod, ResourceProfile, PROFILE_HEADER};
