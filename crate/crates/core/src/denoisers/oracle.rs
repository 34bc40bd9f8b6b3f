use std::sync::Arc;

use super::{ConditionVector, Denoiser, DenoiserHandle};
use crate::error::Result;
use crate::latent::VideoLatent;

/// Returns the stored initial noise at every step.
#[derive(Debug, Clone)]
pub struct OracleDenoiser {
    noise: VideoLatent,
}

impl OracleDenoiser {
    pub fn new(noise: VideoLatent) -> Self {
        Self { noise }
    }
}

impl Denoiser for OracleDenoiser {
    fn id(&self) -> String {
        "oracle".into()
    }

    fn predict(&self, z_t: &VideoLatent, _cond: &ConditionVector, _t: usize) -> Result<VideoLatent> {
        z_t.ensure_same_shape(&self.noise, "oracle denoiser input")?;
        Ok(self.noise.clone())
    }
}

pub fn oracle_noise_denoiser(noise: VideoLatent) -> DenoiserHandle {
    Arc::new(OracleDenoiser::new(noise))
}
