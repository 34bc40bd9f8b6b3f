//! Noise predictors `eps(z_t, c, t)`.
//!
//! The trained network is replaced by predictors whose behaviour is known
//! exactly: the stored-noise oracle, the closed-form optimum for Gaussian and
//! Gaussian-mixture priors, and a wrapper that injects a controlled bias.

mod analytic;
mod biased;
mod mc;
mod oracle;
mod prior;

use std::sync::Arc;

use crate::error::Result;
use crate::latent::VideoLatent;

pub use analytic::{gaussian_optimal_denoiser, gmm_optimal_denoiser, GaussianDenoiser, GmmDenoiser};
pub use biased::{biased_denoiser, BiasKind, BiasProfile, BiasSpec, BiasedDenoiser};
pub use mc::{mc_oracle_eps, McEstimate, MIN_EFFECTIVE_SAMPLES, MIN_MC_SAMPLES};
pub use oracle::{oracle_noise_denoiser, OracleDenoiser};
pub use prior::{PriorComponent, VideoPrior};

/// Opaque conditioning input.
///
/// Mixture denoisers use `class` to restrict prediction to one component;
/// `values` is carried through but otherwise ignored.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConditionVector {
    pub values: Vec<f64>,
    pub class: Option<usize>,
}

impl ConditionVector {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn class(k: usize) -> Self {
        Self { values: Vec::new(), class: Some(k) }
    }
}

/// A noise predictor. Implementations must be pure in `(z_t, cond, t)` and
/// return a latent with the same shape as `z_t`.
pub trait Denoiser: Send + Sync {
    fn id(&self) -> String;

    fn predict(&self, z_t: &VideoLatent, cond: &ConditionVector, t: usize) -> Result<VideoLatent>;
}

pub type DenoiserHandle = Arc<dyn Denoiser>;

impl<D: Denoiser + ?Sized> Denoiser for Arc<D> {
    fn id(&self) -> String {
        (**self).id()
    }

    fn predict(&self, z_t: &VideoLatent, cond: &ConditionVector, t: usize) -> Result<VideoLatent> {
        (**self).predict(z_t, cond, t)
    }
}

/// Adapts a closure into a [`Denoiser`].
pub struct FnDenoiser<F> {
    id: String,
    f: F,
}

impl<F> FnDenoiser<F>
where
    F: Fn(&VideoLatent, &ConditionVector, usize) -> Result<VideoLatent> + Send + Sync,
{
    pub fn new(id: impl Into<String>, f: F) -> Self {
        Self { id: id.into(), f }
    }
}

impl<F> Denoiser for FnDenoiser<F>
where
    F: Fn(&VideoLatent, &ConditionVector, usize) -> Result<VideoLatent> + Send + Sync,
{
    fn id(&self) -> String {
        self.id.clone()
    }

    fn predict(&self, z_t: &VideoLatent, cond: &ConditionVector, t: usize) -> Result<VideoLatent> {
        (self.f)(z_t, cond, t)
    }
}

/// Predicts zero noise everywhere.
pub fn zero_denoiser() -> DenoiserHandle {
    Arc::new(FnDenoiser::new("zero", |z: &VideoLatent, _: &ConditionVector, _| {
        VideoLatent::zeros(z.frames(), z.dims())
    }))
}
