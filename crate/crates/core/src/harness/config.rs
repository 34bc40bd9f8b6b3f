//! Run configuration, read from TOML.
//!
//! ```toml
//! seed = 7
//! frames = 16
//!
//! [schedule]
//! timesteps = 1000
//! beta_start = 1e-4
//! beta_end = 0.02
//!
//! [sampler]
//! kind = "ddim"      # or "ancestral" (always walks the full grid)
//! eta = 0.0
//! steps = 50
//! strength = 1.0     # noising level as a fraction of T
//!
//! [prior]
//! kind = "blob"      # or "file" with `path = "prior.toml"`
//! sigma = 0.2
//!
//! [denoiser]
//! kind = "optimal"   # or "oracle"
//! bias = 0.1         # RMS of the injected bias direction
//!
//! [rectifier]
//! omega_min = 0.5    # or an explicit `omega = [...]` list of L weights
//! tau = [0.0, 0.6]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::denoisers::{BiasKind, BiasProfile, BiasSpec};
use crate::error::{invalid, Error, Result};
use crate::rectifier::{omega_ramp, Window, DEFAULT_OMEGA_MIN};
use crate::rng::derive_seed;
use crate::sampler::{make_step_plan_from, SamplerKind, StepPlan};
use crate::schedule::{make_linear_schedule, NoiseSchedule, DEFAULT_BETA_END, DEFAULT_BETA_START, DEFAULT_TIMESTEPS};
use crate::synth::BlobScene;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_frames")]
    pub frames: usize,
    /// Output directory; relative paths resolve against the output root.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Nearest-neighbour upscale factor for exported PGM frames.
    #[serde(default = "default_export_scale")]
    pub export_scale: usize,
    #[serde(default)]
    pub record_trajectory: bool,
    /// Class index handed to mixture denoisers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition_class: Option<usize>,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default)]
    pub denoiser: DenoiserConfig,
    #[serde(default)]
    pub rectifier: RectifierSection,
    #[serde(default)]
    pub reference: ReferenceConfig,
}

fn default_frames() -> usize {
    16
}

fn default_export_scale() -> usize {
    4
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            frames: default_frames(),
            output_dir: None,
            export_scale: default_export_scale(),
            record_trajectory: false,
            condition_class: None,
            schedule: ScheduleConfig::default(),
            sampler: SamplerConfig::default(),
            prior: PriorConfig::default(),
            denoiser: DenoiserConfig::default(),
            rectifier: RectifierSection::default(),
            reference: ReferenceConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub timesteps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self { timesteps: DEFAULT_TIMESTEPS, beta_start: DEFAULT_BETA_START, beta_end: DEFAULT_BETA_END }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerName {
    Ddim,
    Ancestral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub kind: SamplerName,
    pub eta: f64,
    pub steps: usize,
    pub strength: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { kind: SamplerName::Ddim, eta: 0.0, steps: 50, strength: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PriorConfig {
    Blob {
        #[serde(default = "default_grid")]
        grid: [usize; 2],
        #[serde(default = "default_center")]
        center: [f64; 2],
        #[serde(default = "default_velocity")]
        velocity: [f64; 2],
        #[serde(default = "default_radius")]
        radius: f64,
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        #[serde(default)]
        background: f64,
        #[serde(default = "default_sigma")]
        sigma: f64,
    },
    File {
        path: PathBuf,
    },
}

fn default_grid() -> [usize; 2] {
    [16, 16]
}
fn default_center() -> [f64; 2] {
    [4.0, 4.0]
}
fn default_velocity() -> [f64; 2] {
    [0.5, 0.5]
}
fn default_radius() -> f64 {
    2.0
}
fn default_amplitude() -> f64 {
    1.0
}
fn default_sigma() -> f64 {
    0.2
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig::Blob {
            grid: default_grid(),
            center: default_center(),
            velocity: default_velocity(),
            radius: default_radius(),
            amplitude: default_amplitude(),
            background: 0.0,
            sigma: default_sigma(),
        }
    }
}

impl PriorConfig {
    pub fn blob_scene(&self) -> Option<(BlobScene, f64)> {
        match self {
            PriorConfig::Blob { grid, center, velocity, radius, amplitude, background, sigma } => Some((
                BlobScene {
                    grid: (grid[0], grid[1]),
                    center: (center[0], center[1]),
                    velocity: (velocity[0], velocity[1]),
                    radius: *radius,
                    amplitude: *amplitude,
                    background: *background,
                },
                *sigma,
            )),
            PriorConfig::File { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DenoiserName {
    /// Closed-form optimum for the configured prior.
    Optimal,
    /// Returns the run's stored initial noise.
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BiasProfileName {
    Constant,
    Ramp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DenoiserConfig {
    pub kind: DenoiserName,
    /// RMS entry of the random bias direction; 0 disables the bias.
    pub bias: f64,
    /// Explicit per-frame bias vector of length D (overrides `bias`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bias_vector: Option<Vec<f64>>,
    /// Seed of the bias direction; defaults to one derived from the run seed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bias_seed: Option<u64>,
    pub bias_profile: BiasProfileName,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            kind: DenoiserName::Optimal,
            bias: 0.0,
            bias_vector: None,
            bias_seed: None,
            bias_profile: BiasProfileName::Constant,
        }
    }
}

const BIAS_SEED_SALT: u64 = 0xB1A5;

impl DenoiserConfig {
    pub fn bias_spec(&self, run_seed: u64, timesteps: usize) -> Option<BiasSpec> {
        let kind = match &self.bias_vector {
            Some(v) => BiasKind::Constant(v.clone()),
            None if self.bias != 0.0 => BiasKind::RandomDirection {
                rms: self.bias,
                seed: self.bias_seed.unwrap_or_else(|| derive_seed(run_seed, BIAS_SEED_SALT)),
            },
            None => return None,
        };
        let profile = match self.bias_profile {
            BiasProfileName::Constant => BiasProfile::Constant,
            BiasProfileName::Ramp => BiasProfile::Ramp { timesteps },
        };
        Some(BiasSpec { kind, profile })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RectifierSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<Vec<f64>>,
    pub omega_min: f64,
    pub tau: [f64; 2],
}

impl Default for RectifierSection {
    fn default() -> Self {
        let w = Window::default();
        Self { omega: None, omega_min: DEFAULT_OMEGA_MIN, tau: [w.start, w.end] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ReferenceConfig {
    /// Frame 0 of a prior draw on the reference stream.
    #[default]
    Sample,
    /// Frame-0 mean of the first prior component.
    Mean,
    /// Frame 0 of a VLT1 file.
    File { path: PathBuf },
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Loads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let PriorConfig::File { path } = &mut self.prior {
            fix(path);
        }
        if let ReferenceConfig::File { path } = &mut self.reference {
            fix(path);
        }
        if let Some(path) = &mut self.output_dir {
            fix(path);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        make_linear_schedule(self.schedule.timesteps, self.schedule.beta_start, self.schedule.beta_end)
    }

    pub fn sampler_kind(&self) -> Result<SamplerKind> {
        let kind = match self.sampler.kind {
            SamplerName::Ddim => SamplerKind::Ddim { eta: self.sampler.eta },
            SamplerName::Ancestral => SamplerKind::Ancestral,
        };
        kind.validate()?;
        Ok(kind)
    }

    /// First reverse timestep: `round(strength * T)`, at least 1.
    pub fn start_timestep(&self) -> Result<usize> {
        let s = self.sampler.strength;
        if !(s.is_finite() && s > 0.0 && s <= 1.0) {
            return Err(invalid(format!("strength {s} outside (0, 1]")));
        }
        Ok(((s * self.schedule.timesteps as f64).round() as usize).max(1))
    }

    pub fn step_plan(&self, schedule: &NoiseSchedule) -> Result<StepPlan> {
        let start = self.start_timestep()?;
        let steps = match self.sampler.kind {
            SamplerName::Ddim => self.sampler.steps,
            SamplerName::Ancestral => start,
        };
        make_step_plan_from(schedule, steps, start)
    }

    pub fn omega(&self) -> Result<Vec<f64>> {
        match &self.rectifier.omega {
            Some(w) if w.len() != self.frames => {
                Err(invalid(format!("omega lists {} weights but frames = {}", w.len(), self.frames)))
            }
            Some(w) => {
                if let Some(bad) = w.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                    return Err(invalid(format!("omega weight {bad} outside [0, 1]")));
                }
                Ok(w.clone())
            }
            None => omega_ramp(self.frames, self.rectifier.omega_min),
        }
    }

    pub fn tau(&self) -> Result<Window> {
        Window::new(self.rectifier.tau[0], self.rectifier.tau[1])
    }

    /// Checks every cross-field constraint without running anything.
    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(invalid("frames must be at least 1"));
        }
        if self.export_scale == 0 {
            return Err(invalid("export_scale must be at least 1"));
        }
        let schedule = self.schedule()?;
        self.sampler_kind()?;
        self.step_plan(&schedule)?;
        self.omega()?;
        self.tau()?;
        if let Some((scene, sigma)) = self.prior.blob_scene() {
            scene.validate()?;
            if !(sigma.is_finite() && sigma > 0.0) {
                return Err(invalid(format!("prior sigma {sigma} must be positive")));
            }
        }
        if !self.denoiser.bias.is_finite() || self.denoiser.bias < 0.0 {
            return Err(invalid("bias must be finite and non-negative"));
        }
        Ok(())
    }
}
