//! Closed-form minimizers of the noise-prediction objective.
//!
//! For a prior `z0 ~ N(mu, s2 I)` and `z_t = sqrt(ab) z0 + sqrt(1 - ab) eps`,
//! the conditional mean of the noise is
//!
//! ```text
//! E[eps | z_t] = sqrt(1 - ab) (z_t - sqrt(ab) mu) / (ab s2 + 1 - ab)
//! ```
//!
//! which equals `(z_t - sqrt(ab) m_post) / sqrt(1 - ab)` with `m_post` the
//! posterior mean of `z0`. Mixtures weight the per-component predictions by
//! their posterior responsibilities.

use std::sync::Arc;

use super::{ConditionVector, Denoiser, DenoiserHandle, PriorComponent, VideoPrior};
use crate::error::{invalid, Error, Result};
use crate::latent::VideoLatent;
use crate::schedule::NoiseSchedule;

fn check_input(prior: &VideoPrior, z_t: &VideoLatent) -> Result<()> {
    if z_t.frames() != prior.frames() || z_t.dims() != prior.dims() {
        return Err(Error::Shape(format!(
            "denoiser input has {} frames of {:?}, prior has {} frames of {:?}",
            z_t.frames(),
            z_t.dims(),
            prior.frames(),
            prior.dims()
        )));
    }
    Ok(())
}

/// Per-coordinate optimal noise for one Gaussian component, accumulated as
/// `out += weight * eps_k`.
fn accumulate_component_eps(c: &PriorComponent, z_t: &[f64], alpha_bar: f64, weight: f64, out: &mut [f64]) {
    let sa = alpha_bar.sqrt();
    let gain = (1.0 - alpha_bar).sqrt() / (alpha_bar * c.variance + 1.0 - alpha_bar);
    for ((o, z), m) in out.iter_mut().zip(z_t).zip(c.means.data()) {
        *o += weight * gain * (z - sa * m);
    }
}

fn component_log_likelihood(c: &PriorComponent, z_t: &[f64], alpha_bar: f64) -> f64 {
    let sa = alpha_bar.sqrt();
    let var = alpha_bar * c.variance + 1.0 - alpha_bar;
    let sq: f64 = z_t.iter().zip(c.means.data()).map(|(z, m)| (z - sa * m).powi(2)).sum();
    -0.5 * sq / var - 0.5 * z_t.len() as f64 * (2.0 * std::f64::consts::PI * var).ln()
}

/// Optimal denoiser for a single-component prior.
#[derive(Debug, Clone)]
pub struct GaussianDenoiser {
    prior: VideoPrior,
    schedule: NoiseSchedule,
}

impl GaussianDenoiser {
    pub fn new(prior: VideoPrior, schedule: NoiseSchedule) -> Result<Self> {
        if prior.components().len() != 1 {
            return Err(invalid(format!(
                "Gaussian denoiser needs a one-component prior, got {}",
                prior.components().len()
            )));
        }
        Ok(Self { prior, schedule })
    }
}

impl Denoiser for GaussianDenoiser {
    fn id(&self) -> String {
        format!("gaussian-optimal:{}", self.prior.id())
    }

    fn predict(&self, z_t: &VideoLatent, _cond: &ConditionVector, t: usize) -> Result<VideoLatent> {
        self.schedule.check_t(t)?;
        check_input(&self.prior, z_t)?;
        let mut out = vec![0.0; z_t.data().len()];
        accumulate_component_eps(&self.prior.components()[0], z_t.data(), self.schedule.alpha_bar(t), 1.0, &mut out);
        VideoLatent::new(out, z_t.frames(), z_t.dims())
    }
}

/// Optimal denoiser for a mixture prior.
#[derive(Debug, Clone)]
pub struct GmmDenoiser {
    prior: VideoPrior,
    schedule: NoiseSchedule,
}

impl GmmDenoiser {
    pub fn new(prior: VideoPrior, schedule: NoiseSchedule) -> Self {
        Self { prior, schedule }
    }

    /// Posterior component probabilities given `z_t`, computed in log space.
    /// A class condition restricts the mixture to that component.
    pub fn responsibilities(&self, z_t: &VideoLatent, cond: &ConditionVector, t: usize) -> Result<Vec<f64>> {
        self.schedule.check_t(t)?;
        check_input(&self.prior, z_t)?;
        let k = self.prior.components().len();
        if let Some(class) = cond.class {
            if class >= k {
                return Err(invalid(format!("condition class {class} but prior has {k} components")));
            }
            let mut r = vec![0.0; k];
            r[class] = 1.0;
            return Ok(r);
        }
        let ab = self.schedule.alpha_bar(t);
        let logs: Vec<f64> = self
            .prior
            .components()
            .iter()
            .map(|c| c.weight.ln() + component_log_likelihood(c, z_t.data(), ab))
            .collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::Numeric(format!(
                "all mixture responsibilities underflow at t = {t} (input norm {:.3e})",
                z_t.data().iter().map(|v| v * v).sum::<f64>().sqrt()
            )));
        }
        let weights: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = weights.iter().sum();
        Ok(weights.into_iter().map(|w| w / total).collect())
    }
}

impl Denoiser for GmmDenoiser {
    fn id(&self) -> String {
        format!("gmm-optimal:{}", self.prior.id())
    }

    fn predict(&self, z_t: &VideoLatent, cond: &ConditionVector, t: usize) -> Result<VideoLatent> {
        let r = self.responsibilities(z_t, cond, t)?;
        let ab = self.schedule.alpha_bar(t);
        let mut out = vec![0.0; z_t.data().len()];
        for (c, w) in self.prior.components().iter().zip(&r) {
            if *w > 0.0 {
                accumulate_component_eps(c, z_t.data(), ab, *w, &mut out);
            }
        }
        VideoLatent::new(out, z_t.frames(), z_t.dims())
    }
}

pub fn gaussian_optimal_denoiser(prior: VideoPrior, schedule: NoiseSchedule) -> Result<DenoiserHandle> {
    Ok(Arc::new(GaussianDenoiser::new(prior, schedule)?))
}

pub fn gmm_optimal_denoiser(prior: VideoPrior, schedule: NoiseSchedule) -> DenoiserHandle {
    Arc::new(GmmDenoiser::new(prior, schedule))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latent::{sample_gaussian, Dims};
    use crate::rng::SeededRng;
    use crate::schedule::{add_noise, make_linear_schedule};
    use approx::assert_relative_eq;

    fn flat(vals: &[f64]) -> VideoLatent {
        VideoLatent::new(vals.to_vec(), 1, Dims::flat(vals.len())).unwrap()
    }

    #[test]
    fn standard_normal_prior_reduces_to_scaled_input() {
        let s = NoiseSchedule::default();
        let prior = VideoPrior::single("std", flat(&[0.0; 4]), 1.0).unwrap();
        let d = gaussian_optimal_denoiser(prior, s.clone()).unwrap();
        let z = flat(&[0.3, -1.1, 2.0, 0.0]);
        for t in [1, 250, 1000] {
            let eps = d.predict(&z, &ConditionVector::none(), t).unwrap();
            let k = (1.0 - s.alpha_bar(t)).sqrt();
            for (e, zi) in eps.data().iter().zip(z.data()) {
                assert_relative_eq!(*e, k * zi, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn point_mass_limit_recovers_noise() {
        let s = NoiseSchedule::default();
        let mu = flat(&[0.7, -0.2, 1.3]);
        let d = gaussian_optimal_denoiser(VideoPrior::single("pm", mu.clone(), 1e-14).unwrap(), s.clone()).unwrap();
        let n = flat(&[0.1, -0.5, 2.2]);
        let t = 400;
        let z_t = add_noise(&mu, &n, t, &s).unwrap();
        let eps = d.predict(&z_t, &ConditionVector::none(), t).unwrap();
        for (e, ni) in eps.data().iter().zip(n.data()) {
            assert_relative_eq!(*e, *ni, epsilon = 1e-10);
        }
    }

    #[test]
    fn posterior_mean_form_agrees() {
        let s = make_linear_schedule(50, 1e-3, 0.2).unwrap();
        let (mu, var) = (0.8, 0.3);
        let prior = VideoPrior::single("g", flat(&[mu]), var).unwrap();
        let d = GaussianDenoiser::new(prior, s.clone()).unwrap();
        for (t, z) in [(3, 0.4), (20, -1.7), (50, 2.5)] {
            let ab = s.alpha_bar(t);
            let k = ab * var / (ab * var + 1.0 - ab);
            let m_post = mu + k * (z / ab.sqrt() - mu);
            let expected = (z - ab.sqrt() * m_post) / (1.0 - ab).sqrt();
            let got = d.predict(&flat(&[z]), &ConditionVector::none(), t).unwrap().data()[0];
            assert_relative_eq!(got, expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_component_gmm_matches_gaussian() {
        let s = NoiseSchedule::default();
        let mut rng = SeededRng::new(3);
        let mu = sample_gaussian(2, Dims::flat(6), &mut rng).unwrap();
        let prior = VideoPrior::single("g", mu, 0.4).unwrap();
        let g = GaussianDenoiser::new(prior.clone(), s.clone()).unwrap();
        let m = GmmDenoiser::new(prior, s);
        let z = sample_gaussian(2, Dims::flat(6), &mut rng).unwrap();
        for t in [1, 77, 1000] {
            let c = ConditionVector::none();
            assert_eq!(g.predict(&z, &c, t).unwrap(), m.predict(&z, &c, t).unwrap());
        }
    }

    #[test]
    fn symmetric_mixture_at_origin() {
        let s = NoiseSchedule::default();
        let comps =
            vec![PriorComponent::new(0.5, flat(&[1.0, -2.0]), 0.3), PriorComponent::new(0.5, flat(&[-1.0, 2.0]), 0.3)];
        let d = GmmDenoiser::new(VideoPrior::new("sym", comps).unwrap(), s);
        let z = flat(&[0.0, 0.0]);
        let r = d.responsibilities(&z, &ConditionVector::none(), 300).unwrap();
        assert_relative_eq!(r[0], 0.5, epsilon = 1e-15);
        let eps = d.predict(&z, &ConditionVector::none(), 300).unwrap();
        assert!(eps.data().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn responsibilities_sum_to_one_and_respect_class() {
        let s = NoiseSchedule::default();
        let mut rng = SeededRng::new(9);
        let comps = (0..3)
            .map(|k| {
                let m = sample_gaussian(4, Dims::flat(8), &mut rng).unwrap().map(|v| 3.0 * v);
                PriorComponent::new([0.2, 0.3, 0.5][k], m, 0.1 + 0.2 * k as f64)
            })
            .collect();
        let d = GmmDenoiser::new(VideoPrior::new("m3", comps).unwrap(), s);
        for t in [1, 10, 100, 1000] {
            let z = sample_gaussian(4, Dims::flat(8), &mut rng).unwrap();
            let r = d.responsibilities(&z, &ConditionVector::none(), t).unwrap();
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let rc = d.responsibilities(&z, &ConditionVector::class(2), t).unwrap();
            assert_eq!(rc, vec![0.0, 0.0, 1.0]);
        }
        let z = VideoLatent::zeros(4, Dims::flat(8)).unwrap();
        assert!(d.responsibilities(&z, &ConditionVector::class(3), 5).is_err());
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = make_linear_schedule(10, 0.01, 0.1).unwrap();
        let prior = VideoPrior::single("g", flat(&[0.0, 0.0]), 1.0).unwrap();
        let d = GaussianDenoiser::new(prior.clone(), s.clone()).unwrap();
        let c = ConditionVector::none();
        assert!(matches!(d.predict(&flat(&[0.0, 0.0]), &c, 11), Err(Error::TimestepOutOfRange { .. })));
        assert!(matches!(d.predict(&flat(&[0.0, 0.0, 0.0]), &c, 1), Err(Error::Shape(_))));
        let two = VideoPrior::new(
            "two",
            vec![PriorComponent::new(0.5, flat(&[0.0, 0.0]), 1.0), PriorComponent::new(0.5, flat(&[1.0, 0.0]), 1.0)],
        )
        .unwrap();
        assert!(GaussianDenoiser::new(two, s).is_err());
    }
}
