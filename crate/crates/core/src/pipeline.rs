//! End-to-end image-to-video generation: noise the repeated reference image,
//! then run the reverse process with window-gated noise rectification.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::denoisers::{ConditionVector, Denoiser};
use crate::error::{Error, Result};
use crate::latent::{repeat_image, sample_gaussian, Dims, ImageLatent, VideoLatent};
use crate::rectifier::{RectifierConfig, Window};
use crate::rng::{SeededRng, Stream};
use crate::sampler::{run_reverse, SamplerKind, StepPlan, Trajectory};
use crate::schedule::{add_noise, NoiseSchedule};
use crate::vlt1;

#[derive(Debug, Clone)]
pub struct GenerationRequest {
    pub reference: ImageLatent,
    pub cond: ConditionVector,
    pub frames: usize,
    pub omega: Vec<f64>,
    pub tau: Window,
    /// Reverse timesteps; the first entry is also the noising level.
    pub plan: StepPlan,
    pub sampler: SamplerKind,
    pub seed: u64,
    pub prior_id: Option<String>,
    pub record_trajectory: bool,
}

#[derive(Debug, Clone)]
pub struct Generation {
    pub video: VideoLatent,
    pub initial_noise: VideoLatent,
    pub manifest: RunManifest,
    pub trajectory: Option<Trajectory>,
}

/// A failed generation together with the manifest recording its cause.
#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct RunFailure {
    pub manifest: Box<RunManifest>,
    #[source]
    pub error: Error,
}

/// The initial noise a run with `seed` draws. Exposed so fixtures such as the
/// stored-noise oracle can be built before the run starts.
pub fn initial_noise(seed: u64, frames: usize, dims: Dims) -> Result<VideoLatent> {
    sample_gaussian(frames, dims, &mut SeededRng::with_stream(seed, Stream::InitialNoise))
}

pub fn content_hash(video: &VideoLatent) -> String {
    hex::encode(Sha256::digest(vlt1::encode(video)))
}

pub fn generate_video(
    request: &GenerationRequest,
    denoiser: &dyn Denoiser,
    schedule: &NoiseSchedule,
) -> std::result::Result<Generation, RunFailure> {
    let mut manifest = RunManifest::for_request(request, denoiser, schedule);
    match run(request, denoiser, schedule) {
        Ok((video, initial_noise, trajectory)) => {
            manifest.output_sha256 = content_hash(&video);
            Ok(Generation { video, initial_noise, manifest, trajectory })
        }
        Err(error) => {
            manifest.status = format!("failed[{}]: {}", error.category(), error);
            Err(RunFailure { manifest: Box::new(manifest), error })
        }
    }
}

fn run(
    request: &GenerationRequest,
    denoiser: &dyn Denoiser,
    schedule: &NoiseSchedule,
) -> Result<(VideoLatent, VideoLatent, Option<Trajectory>)> {
    let noise = initial_noise(request.seed, request.frames, request.reference.dims())?;
    let rectifier = RectifierConfig::new(request.omega.clone(), request.tau, noise.clone())?;
    let repeated = repeat_image(&request.reference, request.frames)?;
    let z_start = add_noise(&repeated, &noise, request.plan.first(), schedule)?;
    let mut sampler_rng = SeededRng::with_stream(request.seed, Stream::Sampler);
    let (video, trajectory) = run_reverse(
        &z_start,
        denoiser,
        Some(&rectifier),
        &request.plan,
        request.sampler,
        schedule,
        &request.cond,
        &mut sampler_rng,
        request.record_trajectory,
    )?;
    Ok((video, noise, trajectory))
}

/// Flat `key = value` record of a run. Keys are written in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub status: String,
    pub seed: u64,
    pub timesteps: usize,
    pub steps: usize,
    pub t_start: usize,
    pub sampler: String,
    pub eta: f64,
    pub frames: usize,
    pub frame_len: usize,
    pub dims: Dims,
    pub omega: Vec<f64>,
    pub tau: Window,
    pub denoiser: String,
    pub prior: String,
    pub output_sha256: String,
}

const NONE: &str = "none";

impl RunManifest {
    fn for_request(request: &GenerationRequest, denoiser: &dyn Denoiser, schedule: &NoiseSchedule) -> Self {
        let dims = request.reference.dims();
        Self {
            status: "ok".into(),
            seed: request.seed,
            timesteps: schedule.len(),
            steps: request.plan.len(),
            t_start: request.plan.first(),
            sampler: request.sampler.name().into(),
            eta: request.sampler.eta(),
            frames: request.frames,
            frame_len: dims.len(),
            dims,
            omega: request.omega.clone(),
            tau: request.tau,
            denoiser: denoiser.id(),
            prior: request.prior_id.clone().unwrap_or_else(|| NONE.into()),
            output_sha256: NONE.into(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let omega = self.omega.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(",");
        let rows: [(&str, String); 17] = [
            ("status", self.status.clone()),
            ("seed", self.seed.to_string()),
            ("T", self.timesteps.to_string()),
            ("K", self.steps.to_string()),
            ("t_start", self.t_start.to_string()),
            ("sampler", self.sampler.clone()),
            ("eta", self.eta.to_string()),
            ("L", self.frames.to_string()),
            ("D", self.frame_len.to_string()),
            ("dims", format!("{},{},{}", self.dims.channels, self.dims.height, self.dims.width)),
            ("omega", omega),
            ("tau_start", self.tau.start.to_string()),
            ("tau_end", self.tau.end.to_string()),
            ("denoiser", self.denoiser.clone()),
            ("prior", self.prior.clone()),
            ("output_sha256", self.output_sha256.clone()),
            ("format", "rectify-manifest-1".into()),
        ];
        for (k, v) in rows {
            let _ = writeln!(s, "{k} = {}", v.replace('\n', " "));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = std::collections::BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| Error::Parse(format!("manifest line {}: expected `key = value`", lineno + 1)))?;
            map.insert(k.trim().to_string(), v.to_string());
        }
        let get = |k: &str| map.get(k).cloned().ok_or_else(|| Error::Parse(format!("manifest missing `{k}`")));
        fn num<T: std::str::FromStr>(k: &str, v: String) -> Result<T> {
            v.trim().parse().map_err(|_| Error::Parse(format!("manifest `{k}` has bad value {v:?}")))
        }
        let dims: Vec<usize> = get("dims")?.split(',').map(|p| num("dims", p.to_string())).collect::<Result<_>>()?;
        let [c, h, w] = dims[..] else {
            return Err(Error::Parse("manifest `dims` needs three values".into()));
        };
        let omega_text = get("omega")?;
        let omega = if omega_text.trim().is_empty() {
            Vec::new()
        } else {
            omega_text.split(',').map(|p| num("omega", p.to_string())).collect::<Result<_>>()?
        };
        Ok(Self {
            status: get("status")?,
            seed: num("seed", get("seed")?)?,
            timesteps: num("T", get("T")?)?,
            steps: num("K", get("K")?)?,
            t_start: num("t_start", get("t_start")?)?,
            sampler: get("sampler")?,
            eta: num("eta", get("eta")?)?,
            frames: num("L", get("L")?)?,
            frame_len: num("D", get("D")?)?,
            dims: Dims::new(c, h, w),
            omega,
            tau: Window { start: num("tau_start", get("tau_start")?)?, end: num("tau_end", get("tau_end")?)? },
            denoiser: get("denoiser")?,
            prior: get("prior")?,
            output_sha256: get("output_sha256")?,
        })
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::harness::io::write_atomic(path, self.to_text().as_bytes())
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// SHA-256 of the serialized manifest.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}
