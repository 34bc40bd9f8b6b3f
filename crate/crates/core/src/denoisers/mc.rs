//! Brute-force estimate of `E[eps | z_t]` by self-normalized importance
//! sampling over prior draws. Reference values for the analytic denoisers.

use super::VideoPrior;
use crate::error::{invalid, Error, Result};
use crate::latent::VideoLatent;
use crate::rng::SeededRng;
use crate::schedule::NoiseSchedule;

pub const MIN_MC_SAMPLES: usize = 1_000;
pub const MIN_EFFECTIVE_SAMPLES: f64 = 10.0;

#[derive(Debug, Clone)]
pub struct McEstimate {
    pub mean: VideoLatent,
    /// Delta-method standard error of each coordinate of `mean`.
    pub std_err: VideoLatent,
    pub effective_samples: f64,
}

pub fn mc_oracle_eps(
    z_t: &VideoLatent,
    t: usize,
    prior: &VideoPrior,
    schedule: &NoiseSchedule,
    samples: usize,
    rng: &mut SeededRng,
) -> Result<McEstimate> {
    schedule.check_t(t)?;
    if samples < MIN_MC_SAMPLES {
        return Err(invalid(format!("need at least {MIN_MC_SAMPLES} samples, got {samples}")));
    }
    if z_t.frames() != prior.frames() || z_t.dims() != prior.dims() {
        return Err(Error::Shape("mc_oracle_eps input does not match prior shape".into()));
    }
    let ab = schedule.alpha_bar(t);
    let (sa, sn) = (ab.sqrt(), (1.0 - ab).sqrt());
    let n = z_t.data().len();

    // Pass 1: log-weights. Pass 2 replays the same draws from a cloned stream.
    let start = rng.clone();
    let mut log_w = Vec::with_capacity(samples);
    for _ in 0..samples {
        let x0 = prior.sample(rng);
        let sq: f64 = z_t.data().iter().zip(x0.data()).map(|(z, x)| (z - sa * x).powi(2)).sum();
        log_w.push(-0.5 * sq / (1.0 - ab));
    }
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Numeric("all importance weights underflow".into()));
    }
    let w: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    let w: Vec<f64> = w.into_iter().map(|x| x / total).collect();
    let sum_w2: f64 = w.iter().map(|x| x * x).sum();
    let ess = 1.0 / sum_w2;
    if ess < MIN_EFFECTIVE_SAMPLES {
        return Err(Error::Numeric(format!("effective sample size {ess:.2} below {MIN_EFFECTIVE_SAMPLES}")));
    }

    let mut replay = start;
    let mut s1 = vec![0.0; n]; // sum w eps
    let mut s2 = vec![0.0; n]; // sum w^2 eps
    let mut s3 = vec![0.0; n]; // sum w^2 eps^2
    for wi in &w {
        let x0 = prior.sample(&mut replay);
        for (j, (z, x)) in z_t.data().iter().zip(x0.data()).enumerate() {
            let eps = (z - sa * x) / sn;
            s1[j] += wi * eps;
            s2[j] += wi * wi * eps;
            s3[j] += wi * wi * eps * eps;
        }
    }
    *rng = replay;
    let se: Vec<f64> = (0..n).map(|j| (s3[j] - 2.0 * s1[j] * s2[j] + s1[j] * s1[j] * sum_w2).max(0.0).sqrt()).collect();
    Ok(McEstimate {
        mean: VideoLatent::new(s1, z_t.frames(), z_t.dims())?,
        std_err: VideoLatent::new(se, z_t.frames(), z_t.dims())?,
        effective_samples: ess,
    })
}
