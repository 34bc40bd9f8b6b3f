use std::sync::Arc;

use super::{ConditionVector, Denoiser, DenoiserHandle};
use crate::error::{invalid, Error, Result};
use crate::latent::{Dims, VideoLatent};
use crate::rng::{SeededRng, Stream};

/// Shape of the injected prediction bias.
#[derive(Debug, Clone, PartialEq)]
pub enum BiasKind {
    /// One `D`-vector added to every frame.
    Constant(Vec<f64>),
    /// A fixed Gaussian `D`-direction added to every frame, scaled so its
    /// root-mean-square entry is `rms` (L2 norm `rms * sqrt(D)` per frame).
    RandomDirection { rms: f64, seed: u64 },
}

/// How the bias magnitude varies with the timestep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BiasProfile {
    #[default]
    Constant,
    /// Scale by `t / timesteps`: full bias at the noisiest step, vanishing
    /// toward `t = 1`.
    Ramp { timesteps: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasSpec {
    pub kind: BiasKind,
    pub profile: BiasProfile,
}

impl BiasSpec {
    pub fn random(rms: f64, seed: u64) -> Self {
        Self { kind: BiasKind::RandomDirection { rms, seed }, profile: BiasProfile::Constant }
    }

    pub fn constant(vector: Vec<f64>) -> Self {
        Self { kind: BiasKind::Constant(vector), profile: BiasProfile::Constant }
    }

    pub fn zero() -> Self {
        Self::random(0.0, 0)
    }

    fn materialize(&self, frames: usize, dims: Dims) -> Result<VideoLatent> {
        match &self.kind {
            BiasKind::Constant(v) => {
                if v.len() != dims.len() {
                    return Err(Error::Shape(format!(
                        "constant bias has {} values, frames have {}",
                        v.len(),
                        dims.len()
                    )));
                }
                VideoLatent::new(v.repeat(frames), frames, dims)
            }
            BiasKind::RandomDirection { rms, seed } => {
                if !(rms.is_finite() && *rms >= 0.0) {
                    return Err(invalid(format!("bias norm {rms} must be finite and non-negative")));
                }
                let n = dims.len();
                let mut dir = vec![0.0; n];
                if *rms > 0.0 {
                    SeededRng::with_stream(*seed, Stream::BiasDirection).fill_standard_normal(&mut dir);
                    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let scale = rms * (n as f64).sqrt() / norm;
                    dir.iter_mut().for_each(|v| *v *= scale);
                }
                VideoLatent::new(dir.repeat(frames), frames, dims)
            }
        }
    }

    fn scale_at(&self, t: usize) -> f64 {
        match self.profile {
            BiasProfile::Constant => 1.0,
            BiasProfile::Ramp { timesteps } => t as f64 / timesteps.max(1) as f64,
        }
    }
}

/// Adds a deterministic bias to another denoiser's prediction.
pub struct BiasedDenoiser {
    inner: DenoiserHandle,
    spec: BiasSpec,
    bias: VideoLatent,
}

impl BiasedDenoiser {
    pub fn new(inner: DenoiserHandle, spec: BiasSpec, frames: usize, dims: Dims) -> Result<Self> {
        let bias = spec.materialize(frames, dims)?;
        Ok(Self { inner, spec, bias })
    }

    pub fn bias(&self) -> &VideoLatent {
        &self.bias
    }
}

impl Denoiser for BiasedDenoiser {
    fn id(&self) -> String {
        let tag = match &self.spec.kind {
            BiasKind::Constant(_) => "constant".to_string(),
            BiasKind::RandomDirection { rms, seed } => format!("random:{rms}:{seed}"),
        };
        format!("biased[{tag}]({})", self.inner.id())
    }

    fn predict(&self, z_t: &VideoLatent, cond: &ConditionVector, t: usize) -> Result<VideoLatent> {
        let eps = self.inner.predict(z_t, cond, t)?;
        eps.axpby(1.0, &self.bias, self.spec.scale_at(t))
    }
}

pub fn biased_denoiser(inner: DenoiserHandle, spec: BiasSpec, frames: usize, dims: Dims) -> Result<DenoiserHandle> {
    Ok(Arc::new(BiasedDenoiser::new(inner, spec, frames, dims)?))
}
