use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use rectify_core::harness::io::export_frames;
use rectify_core::harness::report::metric_report_csv;
use rectify_core::harness::run::{execute, write_artifacts};
use rectify_core::harness::{run_sweep, RunConfig, SweepSpec, OUTPUT_ROOT_ENV};
use rectify_core::{vlt1, ErrorCategory, MetricReport};

const SCHEMAS: &str = "\
Output files:
  generate -> <out>/video.vlt1, reference.vlt1, manifest.txt, metrics.csv, frames/frame_NNN.pgm
              (+ trajectory/ with step_NNNN.vlt1 and index.csv when record_trajectory = true)

CSV schemas (RFC 4180, header row first, `NA` marks undefined values):
  metrics.csv    seed,frames,mean_fidelity_cosine,mean_fidelity_mse,temporal_coherence,
                 motion_intensity,fidelity_cosine_per_frame,fidelity_mse_per_frame
                 (per-frame columns hold `;`-separated lists)
  runs.csv       row,axis,value,seed,run_seed,status,mean_fidelity_cosine,mean_fidelity_mse,
                 temporal_coherence,motion_intensity,output_sha256
  runs_long.csv  row,axis,value,seed,metric,metric_value
  summary.csv    axis,value,runs,failed, then <metric>_mean,<metric>_std for
                 mean_fidelity_cosine, mean_fidelity_mse, temporal_coherence, motion_intensity
  trajectory/index.csv  step,t,file

Errors print one line `error category=<config|shape|numeric|io>: <message>` and exit 1.";

#[derive(Parser)]
#[command(name = "rectify", version, about = "Noise-rectified image-to-video sampling with analytic denoisers")]
#[command(after_long_help = SCHEMAS)]
struct Cli {
    /// Root for output directories not set explicitly.
    #[arg(long, global = true, env = OUTPUT_ROOT_ENV, default_value = "rectify-out")]
    output_root: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one video from a TOML run config.
    Generate {
        config: PathBuf,
        /// Output directory (default: config `output_dir`, else <output-root>/<config name>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a parameter sweep from a TOML sweep file.
    Sweep {
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a video against frame 0 of a reference VLT1 file.
    Eval {
        video: PathBuf,
        reference: PathBuf,
        /// Metrics CSV path (default: <video>.metrics.csv).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed recorded in the CSV.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write one binary PGM per frame, min-max normalized over the whole video.
    ExportFrames {
        video: PathBuf,
        out_dir: PathBuf,
        #[arg(long, default_value_t = 4)]
        scale: usize,
    },
}

fn default_dir(root: &Path, file: &Path) -> PathBuf {
    root.join(file.file_stem().unwrap_or(file.as_os_str()))
}

fn generate(root: &Path, config_path: &Path, out: Option<PathBuf>) -> Result<()> {
    let config = RunConfig::load(config_path)?;
    let dir = out.or_else(|| config.output_dir.clone()).unwrap_or_else(|| default_dir(root, config_path));
    let outcome = execute(&config)?;
    write_artifacts(&outcome, &dir)?;
    let r = &outcome.report;
    println!(
        "wrote {} (sha256 {}), fidelity {}, motion {}",
        dir.display(),
        outcome.generation.manifest.output_sha256,
        fmt(r.mean_fidelity_cosine),
        fmt(r.motion_intensity)
    );
    Ok(())
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| format!("{x:.6}"))
}

fn sweep(root: &Path, spec_path: &Path, out: Option<PathBuf>) -> Result<()> {
    let spec = SweepSpec::load(spec_path)?;
    let dir = out.or_else(|| spec.output_dir.clone()).unwrap_or_else(|| default_dir(root, spec_path));
    let result = run_sweep(&spec)?;
    result.write(&dir)?;
    println!("wrote {} rows to {}", result.rows.len(), dir.display());
    for s in &result.summary {
        println!(
            "  {} = {}: fidelity {}, motion {} ({} failed)",
            spec.sweep.axis.name(),
            s.value,
            fmt(s.mean_of("mean_fidelity_cosine")),
            fmt(s.mean_of("motion_intensity")),
            s.failed
        );
    }
    let failed = result.failures();
    if failed > 0 {
        let first = result.rows.iter().find_map(|r| r.result.as_ref().err()).cloned().unwrap_or_default();
        let category =
            ["config", "shape", "numeric", "io"].into_iter().find(|c| first.starts_with(c)).unwrap_or("config");
        anyhow::bail!(SweepFailed { failed, total: result.rows.len(), first, category });
    }
    Ok(())
}

/// Some sweep rows failed; the category is taken from the first failure.
#[derive(Debug)]
struct SweepFailed {
    failed: usize,
    total: usize,
    first: String,
    category: &'static str,
}

impl std::fmt::Display for SweepFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} of {} sweep rows failed; first: {}", self.failed, self.total, self.first)
    }
}

impl std::error::Error for SweepFailed {}

fn eval(video: &Path, reference: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Result<()> {
    let v = vlt1::read_file(video)?;
    let r = vlt1::read_file(reference)?.frame_image(0);
    let report = MetricReport::compute(&v, &r)?;
    let csv = metric_report_csv(&report, seed)?;
    let path = out.unwrap_or_else(|| video.with_extension("metrics.csv"));
    rectify_core::harness::io::write_atomic(&path, &csv)?;
    print!("{}", String::from_utf8_lossy(&csv));
    Ok(())
}

fn export(video: &Path, out_dir: &Path, scale: usize) -> Result<()> {
    let v = vlt1::read_file(video)?;
    let files = export_frames(&v, out_dir, scale)?;
    println!("wrote {} frames to {}", files.len(), out_dir.display());
    Ok(())
}

fn category(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<rectify_core::Error>() {
            return e.category().as_str();
        }
        if let Some(s) = cause.downcast_ref::<SweepFailed>() {
            return s.category;
        }
    }
    ErrorCategory::Io.as_str()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let root = cli.output_root.as_path();
    let result = match cli.command {
        Command::Generate { config, out } => generate(root, &config, out).context("generate"),
        Command::Sweep { spec, out } => sweep(root, &spec, out).context("sweep"),
        Command::Eval { video, reference, out, seed } => eval(&video, &reference, out, seed).context("eval"),
        Command::ExportFrames { video, out_dir, scale } => export(&video, &out_dir, scale).context("export-frames"),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error category={}: {e:#}", category(&e));
            ExitCode::FAILURE
        }
    }
}
