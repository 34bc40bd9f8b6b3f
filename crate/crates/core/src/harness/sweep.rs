//! Parameter sweeps over rectification weight, window, and bias.
//!
//! A sweep runs the cross product `values x seeds` in parallel. The run seed
//! for a row depends only on the base seed and the listed seed, so every
//! value is evaluated on the same noise draws.
//!
//! Outputs:
//! - `runs.csv`: one row per run (`row, axis, value, seed, run_seed, status,
//!   mean_fidelity_cosine, mean_fidelity_mse, temporal_coherence,
//!   motion_intensity, output_sha256`).
//! - `runs_long.csv`: one row per run per metric (`row, axis, value, seed,
//!   metric, metric_value`).
//! - `summary.csv`: one row per value (`axis, value, runs, failed`, then
//!   `<metric>_mean, <metric>_std` for each metric).

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::io::write_atomic;
use super::report::{csv_error, opt};
use super::run::execute;
use super::stats::{mean, std_dev};
use crate::error::{invalid, Error, Result};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    OmegaMin,
    TauEnd,
    TauStart,
    BiasNorm,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::OmegaMin => "omega_min",
            SweepAxis::TauEnd => "tau_end",
            SweepAxis::TauStart => "tau_start",
            SweepAxis::BiasNorm => "bias_norm",
        }
    }

    pub fn apply(self, config: &mut RunConfig, value: f64) {
        match self {
            SweepAxis::OmegaMin => {
                config.rectifier.omega = None;
                config.rectifier.omega_min = value;
            }
            SweepAxis::TauEnd => config.rectifier.tau[1] = value,
            SweepAxis::TauStart => config.rectifier.tau[0] = value,
            SweepAxis::BiasNorm => {
                config.denoiser.bias_vector = None;
                config.denoiser.bias = value;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub base: RunConfig,
    pub sweep: SweepGrid,
}

impl SweepSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec = Self::from_toml(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        spec.base.resolve_paths(base);
        if let Some(out) = spec.output_dir.as_mut().filter(|p| p.is_relative()) {
            *out = base.join(&*out);
        }
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sweep.values.is_empty() || self.sweep.seeds.is_empty() {
            return Err(invalid("sweep needs at least one value and one seed"));
        }
        if let Some(v) = self.sweep.values.iter().find(|v| !v.is_finite()) {
            return Err(invalid(format!("sweep value {v} is not finite")));
        }
        Ok(())
    }

    /// Config for one `(value, seed)` cell.
    pub fn row_config(&self, value: f64, seed: u64) -> RunConfig {
        let mut cfg = self.base.clone();
        self.sweep.axis.apply(&mut cfg, value);
        cfg.seed = derive_seed(self.base.seed, seed);
        cfg.record_trajectory = false;
        cfg
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowMetrics {
    pub mean_fidelity_cosine: Option<f64>,
    pub mean_fidelity_mse: f64,
    pub temporal_coherence: Option<f64>,
    pub motion_intensity: Option<f64>,
    pub output_sha256: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub index: usize,
    pub value: f64,
    pub seed: u64,
    pub run_seed: u64,
    /// Metrics, or `category: message` on failure.
    pub result: std::result::Result<RowMetrics, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub value: f64,
    pub runs: usize,
    pub failed: usize,
    /// `(mean, std)` per metric, in [`METRICS`] order; `None` if no run defined it.
    pub stats: Vec<Option<(f64, f64)>>,
}

pub const METRICS: [&str; 4] = ["mean_fidelity_cosine", "mean_fidelity_mse", "temporal_coherence", "motion_intensity"];

impl RowMetrics {
    fn values(&self) -> [Option<f64>; 4] {
        [self.mean_fidelity_cosine, Some(self.mean_fidelity_mse), self.temporal_coherence, self.motion_intensity]
    }
}

impl SummaryRow {
    pub fn mean_of(&self, metric: &str) -> Option<f64> {
        let i = METRICS.iter().position(|m| *m == metric)?;
        self.stats[i].map(|(m, _)| m)
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
    pub summary: Vec<SummaryRow>,
}

pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let cells: Vec<(usize, f64, u64)> = spec
        .sweep
        .values
        .iter()
        .flat_map(|&v| spec.sweep.seeds.iter().map(move |&s| (v, s)))
        .enumerate()
        .map(|(i, (v, s))| (i, v, s))
        .collect();
    let rows: Vec<SweepRow> = cells
        .into_par_iter()
        .map(|(index, value, seed)| {
            let cfg = spec.row_config(value, seed);
            let result = execute(&cfg)
                .map(|o| RowMetrics {
                    mean_fidelity_cosine: o.report.mean_fidelity_cosine,
                    mean_fidelity_mse: o.report.mean_fidelity_mse,
                    temporal_coherence: o.report.temporal_coherence,
                    motion_intensity: o.report.motion_intensity,
                    output_sha256: o.generation.manifest.output_sha256,
                })
                .map_err(|e| format!("{}: {e}", e.category()));
            SweepRow { index, value, seed, run_seed: cfg.seed, result }
        })
        .collect();
    let summary = spec
        .sweep
        .values
        .iter()
        .map(|&value| {
            let group: Vec<&SweepRow> = rows.iter().filter(|r| r.value.to_bits() == value.to_bits()).collect();
            let ok: Vec<&RowMetrics> = group.iter().filter_map(|r| r.result.as_ref().ok()).collect();
            let stats = (0..METRICS.len())
                .map(|m| {
                    let xs: Vec<f64> = ok.iter().filter_map(|r| r.values()[m]).collect();
                    (!xs.is_empty()).then(|| (mean(&xs), std_dev(&xs)))
                })
                .collect();
            SummaryRow { value, runs: group.len(), failed: group.len() - ok.len(), stats }
        })
        .collect();
    Ok(SweepResult { axis: spec.sweep.axis, rows, summary })
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| Error::Parse(e.to_string()))
}

impl SweepResult {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.result.is_err()).count()
    }

    pub fn summary_means(&self, metric: &str) -> Vec<Option<f64>> {
        self.summary.iter().map(|s| s.mean_of(metric)).collect()
    }

    pub fn runs_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "row",
            "axis",
            "value",
            "seed",
            "run_seed",
            "status",
            METRICS[0],
            METRICS[1],
            METRICS[2],
            METRICS[3],
            "output_sha256",
        ])
        .map_err(csv_error)?;
        for r in &self.rows {
            let head = [
                r.index.to_string(),
                self.axis.name().into(),
                r.value.to_string(),
                r.seed.to_string(),
                r.run_seed.to_string(),
            ];
            let tail: Vec<String> = match &r.result {
                Ok(m) => std::iter::once("ok".to_string())
                    .chain(m.values().iter().map(|v| opt(*v)))
                    .chain(std::iter::once(m.output_sha256.clone()))
                    .collect(),
                Err(e) => {
                    std::iter::once(format!("failed: {e}")).chain(std::iter::repeat_n("NA".to_string(), 5)).collect()
                }
            };
            w.write_record(head.iter().chain(&tail)).map_err(csv_error)?;
        }
        finish(w)
    }

    pub fn long_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["row", "axis", "value", "seed", "metric", "metric_value"]).map_err(csv_error)?;
        for r in &self.rows {
            let Ok(m) = &r.result else { continue };
            for (name, v) in METRICS.iter().zip(m.values()) {
                w.write_record([
                    r.index.to_string(),
                    self.axis.name().into(),
                    r.value.to_string(),
                    r.seed.to_string(),
                    name.to_string(),
                    opt(v),
                ])
                .map_err(csv_error)?;
            }
        }
        finish(w)
    }

    pub fn summary_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["axis".to_string(), "value".into(), "runs".into(), "failed".into()];
        for m in METRICS {
            header.push(format!("{m}_mean"));
            header.push(format!("{m}_std"));
        }
        w.write_record(&header).map_err(csv_error)?;
        for s in &self.summary {
            let mut rec =
                vec![self.axis.name().to_string(), s.value.to_string(), s.runs.to_string(), s.failed.to_string()];
            for st in &s.stats {
                rec.push(opt(st.map(|x| x.0)));
                rec.push(opt(st.map(|x| x.1)));
            }
            w.write_record(&rec).map_err(csv_error)?;
        }
        finish(w)
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files =
            [("runs.csv", self.runs_csv()?), ("runs_long.csv", self.long_csv()?), ("summary.csv", self.summary_csv()?)];
        files
            .into_iter()
            .map(|(name, bytes)| {
                let p = dir.join(name);
                write_atomic(&p, &bytes).map(|_| p)
            })
            .collect()
    }
}
