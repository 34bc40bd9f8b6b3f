//! Variance schedules and closed-form forward noising.
//!
//! Timesteps are 1-based: `t` ranges over `1..=T`, and there is no schedule
//! entry for `t = 0`.

use crate::error::{invalid, Error, Result};
use crate::latent::VideoLatent;

pub const DEFAULT_TIMESTEPS: usize = 1000;
pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    /// Builds a schedule from explicit per-step variance increments.
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(invalid("schedule needs at least one timestep"));
        }
        if let Some(i) = betas.iter().position(|b| !(b.is_finite() && *b > 0.0 && *b < 1.0)) {
            return Err(invalid(format!("beta[{}] = {} outside (0, 1)", i + 1, betas[i])));
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let alpha_bars = alphas
            .iter()
            .scan(1.0, |acc, a| {
                *acc *= a;
                Some(*acc)
            })
            .collect::<Vec<_>>();
        if let Some(i) = alpha_bars.iter().position(|a| *a <= 0.0) {
            return Err(Error::Numeric(format!("alpha_bar underflows to zero at t = {}", i + 1)));
        }
        Ok(Self { betas, alphas, alpha_bars })
    }

    /// Number of training-grid timesteps `T`.
    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    pub fn check_t(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.len() {
            Err(Error::TimestepOutOfRange { t, max: self.len() })
        } else {
            Ok(())
        }
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t - 1]
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        make_linear_schedule(DEFAULT_TIMESTEPS, DEFAULT_BETA_START, DEFAULT_BETA_END)
            .expect("default schedule is valid")
    }
}

/// Linear beta schedule from `beta_start` to `beta_end` over `timesteps` steps.
pub fn make_linear_schedule(timesteps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    if timesteps == 0 {
        return Err(invalid("T must be at least 1"));
    }
    if !(beta_start.is_finite() && beta_end.is_finite()) {
        return Err(invalid("beta bounds must be finite"));
    }
    if !(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0) {
        return Err(invalid(format!("beta bounds must satisfy 0 < start <= end < 1, got ({beta_start}, {beta_end})")));
    }
    let betas = if timesteps == 1 {
        vec![beta_start]
    } else {
        let step = (beta_end - beta_start) / (timesteps - 1) as f64;
        (0..timesteps).map(|i| beta_start + step * i as f64).collect()
    };
    NoiseSchedule::from_betas(betas)
}

/// Closed-form forward noising `sqrt(abar_t) z + sqrt(1 - abar_t) n`.
pub fn add_noise(z: &VideoLatent, n: &VideoLatent, t: usize, schedule: &NoiseSchedule) -> Result<VideoLatent> {
    schedule.check_t(t)?;
    z.ensure_same_shape(n, "add_noise")?;
    let ab = schedule.alpha_bar(t);
    z.axpby(ab.sqrt(), n, (1.0 - ab).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latent::{Dims, VideoLatent};
    use approx::assert_relative_eq;

    fn scalar(v: f64) -> VideoLatent {
        VideoLatent::new(vec![v], 1, Dims::flat(1)).unwrap()
    }

    #[test]
    fn single_step_schedule() {
        let s = make_linear_schedule(1, 0.5, 0.5).unwrap();
        assert_eq!(s.betas(), &[0.5]);
        assert_eq!(s.alpha_bars(), &[0.5]);
    }

    #[test]
    fn two_step_schedule() {
        let s = make_linear_schedule(2, 0.1, 0.3).unwrap();
        assert_relative_eq!(s.alpha_bar(1), 0.9, epsilon = 1e-15);
        assert_relative_eq!(s.alpha_bar(2), 0.63, epsilon = 1e-15);
        assert_eq!(s.alpha(1), 1.0 - s.beta(1));
    }

    #[test]
    fn default_schedule_terminal_alpha_bar() {
        // independent numpy product over linspace(1e-4, 0.02, 1000)
        let s = make_linear_schedule(1000, 1e-4, 0.02).unwrap();
        assert_relative_eq!(s.alpha_bar(1000), 4.035829765375676e-05, max_relative = 1e-9);
        assert!(s.alpha_bars().windows(2).all(|w| w[1] < w[0]));
        assert_eq!(s.alpha_bar(1), s.alpha(1));
    }

    #[test]
    fn rejects_bad_bounds() {
        assert!(make_linear_schedule(0, 0.1, 0.2).is_err());
        assert!(make_linear_schedule(10, 0.0, 0.2).is_err());
        assert!(make_linear_schedule(10, 0.3, 0.2).is_err());
        assert!(make_linear_schedule(10, 0.1, 1.0).is_err());
        assert!(make_linear_schedule(10, f64::NAN, 0.2).is_err());
    }

    #[test]
    fn add_noise_closed_form() {
        let s = make_linear_schedule(2, 0.1, 0.3).unwrap();
        let out = add_noise(&scalar(1.0), &scalar(1.0), 2, &s).unwrap();
        assert_relative_eq!(out.data()[0], 1.402001646349199, epsilon = 1e-12);

        let n = VideoLatent::new(vec![0.3, -1.2, 2.0, 0.1], 2, Dims::flat(2)).unwrap();
        let zero = VideoLatent::zeros(2, Dims::flat(2)).unwrap();
        let only_noise = add_noise(&zero, &n, 1, &s).unwrap();
        let only_signal = add_noise(&n, &zero, 1, &s).unwrap();
        for i in 0..4 {
            assert_relative_eq!(only_noise.data()[i], 0.1f64.sqrt() * n.data()[i], epsilon = 1e-15);
            assert_relative_eq!(only_signal.data()[i], 0.9f64.sqrt() * n.data()[i], epsilon = 1e-15);
        }
    }

    #[test]
    fn add_noise_errors() {
        let s = make_linear_schedule(2, 0.1, 0.3).unwrap();
        assert!(matches!(
            add_noise(&scalar(1.0), &scalar(1.0), 3, &s),
            Err(Error::TimestepOutOfRange { t: 3, max: 2 })
        ));
        assert!(add_noise(&scalar(1.0), &scalar(1.0), 0, &s).is_err());
        let two = VideoLatent::zeros(2, Dims::flat(1)).unwrap();
        assert!(matches!(add_noise(&scalar(1.0), &two, 1, &s), Err(Error::Shape(_))));
    }
}
