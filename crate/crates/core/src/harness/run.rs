use std::path::{Path, PathBuf};

use super::config::{DenoiserName, PriorConfig, ReferenceConfig, RunConfig};
use super::io::{export_frames, write_atomic};
use super::report::metric_report_csv;
use crate::denoisers::{
    biased_denoiser, gaussian_optimal_denoiser, gmm_optimal_denoiser, oracle_noise_denoiser, ConditionVector,
    DenoiserHandle, VideoPrior,
};
use crate::error::{Error, Result};
use crate::latent::{ImageLatent, VideoLatent};
use crate::metrics::MetricReport;
use crate::pipeline::{generate_video, initial_noise, Generation, GenerationRequest, RunFailure};
use crate::rng::{SeededRng, Stream};
use crate::schedule::NoiseSchedule;
use crate::synth::{blob_prior, sample_reference};
use crate::vlt1;

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub config: RunConfig,
    pub reference: ImageLatent,
    pub generation: Generation,
    pub report: MetricReport,
}

pub fn build_prior(config: &RunConfig) -> Result<VideoPrior> {
    let prior = match &config.prior {
        PriorConfig::Blob { .. } => {
            let (scene, sigma) = config.prior.blob_scene().expect("blob prior");
            blob_prior(&scene, config.frames, sigma)?
        }
        PriorConfig::File { path } => VideoPrior::load(path)?,
    };
    if prior.frames() != config.frames {
        return Err(Error::Shape(format!(
            "prior describes {} frames, config asks for {}",
            prior.frames(),
            config.frames
        )));
    }
    Ok(prior)
}

pub fn build_reference(config: &RunConfig, prior: &VideoPrior) -> Result<ImageLatent> {
    let reference = match &config.reference {
        ReferenceConfig::Sample => sample_reference(prior, &mut SeededRng::with_stream(config.seed, Stream::Reference)),
        ReferenceConfig::Mean => prior.components()[0].means.frame_image(0),
        ReferenceConfig::File { path } => vlt1::read_file(path)?.frame_image(0),
    };
    if reference.dims() != prior.dims() {
        return Err(Error::Shape(format!(
            "reference is {:?} but prior frames are {:?}",
            reference.dims(),
            prior.dims()
        )));
    }
    Ok(reference)
}

pub fn build_denoiser(config: &RunConfig, prior: &VideoPrior, schedule: &NoiseSchedule) -> Result<DenoiserHandle> {
    let base = match config.denoiser.kind {
        DenoiserName::Optimal if prior.components().len() == 1 => {
            gaussian_optimal_denoiser(prior.clone(), schedule.clone())?
        }
        DenoiserName::Optimal => gmm_optimal_denoiser(prior.clone(), schedule.clone()),
        DenoiserName::Oracle => oracle_noise_denoiser(initial_noise(config.seed, config.frames, prior.dims())?),
    };
    match config.denoiser.bias_spec(config.seed, schedule.len()) {
        Some(spec) => biased_denoiser(base, spec, config.frames, prior.dims()),
        None => Ok(base),
    }
}

fn prepare(config: &RunConfig) -> Result<(GenerationRequest, DenoiserHandle, NoiseSchedule)> {
    config.validate()?;
    let schedule = config.schedule()?;
    let prior = build_prior(config)?;
    let reference = build_reference(config, &prior)?;
    let denoiser = build_denoiser(config, &prior, &schedule)?;
    let request = GenerationRequest {
        reference,
        cond: ConditionVector { values: Vec::new(), class: config.condition_class },
        frames: config.frames,
        omega: config.omega()?,
        tau: config.tau()?,
        plan: config.step_plan(&schedule)?,
        sampler: config.sampler_kind()?,
        seed: config.seed,
        prior_id: Some(prior.id().to_string()),
        record_trajectory: config.record_trajectory,
    };
    Ok((request, denoiser, schedule))
}

/// Runs one configured generation and scores it against its reference.
pub fn execute(config: &RunConfig) -> Result<RunOutcome> {
    let (request, denoiser, schedule) = prepare(config)?;
    let generation = generate_video(&request, &*denoiser, &schedule).map_err(|f: RunFailure| f.error)?;
    let report = MetricReport::compute(&generation.video, &request.reference)?;
    Ok(RunOutcome { config: config.clone(), reference: request.reference, generation, report })
}

pub const VIDEO_FILE: &str = "video.vlt1";
pub const REFERENCE_FILE: &str = "reference.vlt1";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const METRICS_FILE: &str = "metrics.csv";
pub const FRAMES_DIR: &str = "frames";
pub const TRAJECTORY_DIR: &str = "trajectory";

/// Writes the video, reference, manifest, metrics CSV and per-frame PGMs
/// into `dir`, plus the trajectory dump when one was recorded.
pub fn write_artifacts(outcome: &RunOutcome, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let g = &outcome.generation;
    let video = dir.join(VIDEO_FILE);
    vlt1::write_file(&g.video, &video)?;
    let reference = dir.join(REFERENCE_FILE);
    vlt1::write_file(&VideoLatent::new(outcome.reference.data().to_vec(), 1, outcome.reference.dims())?, &reference)?;
    let manifest = dir.join(MANIFEST_FILE);
    g.manifest.write_file(&manifest)?;
    let metrics = dir.join(METRICS_FILE);
    write_atomic(&metrics, &metric_report_csv(&outcome.report, Some(outcome.config.seed))?)?;
    let frames = dir.join(FRAMES_DIR);
    export_frames(&g.video, &frames, outcome.config.export_scale)?;
    let mut written = vec![video, reference, manifest, metrics, frames];
    if let Some(tr) = &g.trajectory {
        let tdir = dir.join(TRAJECTORY_DIR);
        tr.dump(&tdir, &g.video)?;
        written.push(tdir);
    }
    Ok(written)
}
