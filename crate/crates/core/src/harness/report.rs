//! CSV serialization of metric reports.
//!
//! Metric CSV (one row per run), columns in order:
//! `seed, frames, mean_fidelity_cosine, mean_fidelity_mse, temporal_coherence,
//! motion_intensity, fidelity_cosine_per_frame, fidelity_mse_per_frame`.
//! Per-frame columns are `;`-separated lists. Undefined values (and the seed
//! when the video did not come from a run) are `NA`.

use crate::error::{Error, Result};
use crate::metrics::MetricReport;

pub const NA: &str = "NA";

pub const METRIC_COLUMNS: [&str; 8] = [
    "seed",
    "frames",
    "mean_fidelity_cosine",
    "mean_fidelity_mse",
    "temporal_coherence",
    "motion_intensity",
    "fidelity_cosine_per_frame",
    "fidelity_mse_per_frame",
];

pub(crate) fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| NA.to_string(), |x| x.to_string())
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    Error::Parse(format!("csv: {e}"))
}

pub fn metric_row(report: &MetricReport, seed: Option<u64>) -> Vec<String> {
    let cos = report.per_frame_fidelity_cosine.iter().map(|c| opt(*c)).collect::<Vec<_>>().join(";");
    let mse = report.per_frame_fidelity_mse.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(";");
    vec![
        seed.map_or_else(|| NA.to_string(), |s| s.to_string()),
        report.per_frame_fidelity_mse.len().to_string(),
        opt(report.mean_fidelity_cosine),
        report.mean_fidelity_mse.to_string(),
        opt(report.temporal_coherence),
        opt(report.motion_intensity),
        cos,
        mse,
    ]
}

pub fn metric_report_csv(report: &MetricReport, seed: Option<u64>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(METRIC_COLUMNS).map_err(csv_error)?;
    w.write_record(metric_row(report, seed)).map_err(csv_error)?;
    w.into_inner().map_err(|e| Error::Parse(e.to_string()))
}
