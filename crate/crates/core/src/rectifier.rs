//! Noise rectification.
//!
//! At each reverse step the gap between the stored initial noise `n` and the
//! predicted noise `n_pred` is measured per frame. Inside the rectification
//! window the prediction for frame `i` is replaced by
//!
//! ```text
//! n_pred^i + w^i * gap^0 + (1 - w^i) * gap^i
//! ```
//!
//! so `w^i = 0` pulls frame `i` fully back onto its own initial noise, while
//! `w^i = 1` only shifts it by the first frame's gap. Frame 0 always receives
//! exactly `n^0`.

use crate::error::{invalid, Error, Result};
use crate::latent::VideoLatent;

/// Rectification window as fractions of the inference step sequence.
/// Step 0 (the first reverse step, at the noisiest timestep) sits at 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

impl Window {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !(start.is_finite() && end.is_finite() && 0.0 <= start && start <= end && end <= 1.0) {
            return Err(invalid(format!("window ({start}, {end}) must satisfy 0 <= s <= e <= 1")));
        }
        Ok(Self { start, end })
    }

    pub fn full() -> Self {
        Self { start: 0.0, end: 1.0 }
    }

    pub fn disabled() -> Self {
        Self { start: 0.0, end: 0.0 }
    }
}

impl Default for Window {
    fn default() -> Self {
        Self { start: 0.0, end: 0.6 }
    }
}

/// Whether step `step_index` of `k` falls in `[s, e)`. Since `step_index / k`
/// is always below 1, `e = 1` covers the final step.
pub fn in_window(step_index: usize, k: usize, tau: Window) -> bool {
    if k == 0 || step_index >= k {
        return false;
    }
    let frac = step_index as f64 / k as f64;
    tau.start <= frac && frac < tau.end
}

/// Per-frame weights `w^i = 1 - (i / (L - 1)) (1 - w_min)`, falling linearly
/// from 1 on the first frame to `w_min` on the last.
pub fn omega_ramp(frames: usize, omega_min: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&omega_min) {
        return Err(invalid(format!("omega_min {omega_min} outside [0, 1]")));
    }
    if frames == 0 {
        return Err(invalid("omega ramp needs at least one frame"));
    }
    if frames == 1 {
        return Ok(vec![1.0]);
    }
    let last = (frames - 1) as f64;
    Ok((0..frames).map(|i| 1.0 - (i as f64 / last) * (1.0 - omega_min)).collect())
}

pub const DEFAULT_OMEGA_MIN: f64 = 0.5;

fn check_omega(omega: &[f64], frames: usize) -> Result<()> {
    if omega.len() != frames {
        return Err(Error::Shape(format!("omega has {} weights for {frames} frames", omega.len())));
    }
    if let Some(i) = omega.iter().position(|w| !(0.0..=1.0).contains(w)) {
        return Err(invalid(format!("omega[{i}] = {} outside [0, 1]", omega[i])));
    }
    Ok(())
}

/// `n - n_pred`, frame-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseGap {
    pub delta: VideoLatent,
}

impl NoiseGap {
    pub fn rms(&self) -> f64 {
        let d = self.delta.data();
        (d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64).sqrt()
    }
}

pub fn noise_gap(n: &VideoLatent, n_pred: &VideoLatent) -> Result<NoiseGap> {
    n.ensure_same_shape(n_pred, "noise gap")?;
    Ok(NoiseGap { delta: n.sub(n_pred)? })
}

/// Applies the weighted rectification offset to `n_pred` given its gap.
pub fn rectify_with_gap(n_pred: &VideoLatent, gap: &NoiseGap, omega: &[f64]) -> Result<VideoLatent> {
    n_pred.ensure_same_shape(&gap.delta, "rectify")?;
    check_omega(omega, n_pred.frames())?;
    let mut out = n_pred.clone();
    let first = gap.delta.frame(0);
    for (i, w) in omega.iter().enumerate() {
        let own = gap.delta.frame(i);
        for ((o, g0), gi) in out.frame_mut(i).iter_mut().zip(first).zip(own) {
            *o += w * g0 + (1.0 - w) * gi;
        }
    }
    Ok(out)
}

pub fn rectify(n_pred: &VideoLatent, n: &VideoLatent, omega: &[f64]) -> Result<VideoLatent> {
    let gap = noise_gap(n, n_pred)?;
    rectify_with_gap(n_pred, &gap, omega)
}

/// Everything the reverse loop needs to rectify: weights, window, and the
/// stored initial noise.
#[derive(Debug, Clone, PartialEq)]
pub struct RectifierConfig {
    pub omega: Vec<f64>,
    pub tau: Window,
    pub initial_noise: VideoLatent,
}

impl RectifierConfig {
    pub fn new(omega: Vec<f64>, tau: Window, initial_noise: VideoLatent) -> Result<Self> {
        check_omega(&omega, initial_noise.frames())?;
        Window::new(tau.start, tau.end)?;
        Ok(Self { omega, tau, initial_noise })
    }

    pub(crate) fn check_against(&self, z: &VideoLatent) -> Result<()> {
        check_omega(&self.omega, z.frames())?;
        z.ensure_same_shape(&self.initial_noise, "rectifier initial noise")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latent::{sample_gaussian, Dims};
    use crate::rng::SeededRng;
    use proptest::prelude::*;

    fn col(vals: &[f64]) -> VideoLatent {
        VideoLatent::new(vals.to_vec(), vals.len(), Dims::flat(1)).unwrap()
    }

    #[test]
    fn gap_examples() {
        let n = col(&[1.0, -1.0]);
        assert!(noise_gap(&n, &n).unwrap().delta.data().iter().all(|v| *v == 0.0));
        assert_eq!(noise_gap(&n, &col(&[0.5, 0.5])).unwrap().delta.data(), &[0.5, -1.5]);
        assert_eq!(noise_gap(&n, &col(&[0.0, 0.0])).unwrap().delta, n);
        assert!(noise_gap(&n, &col(&[0.0])).is_err());
    }

    #[test]
    fn rectify_hand_example() {
        let out = rectify(&col(&[0.5, 0.5]), &col(&[1.0, -1.0]), &[1.0, 0.5]).unwrap();
        assert_eq!(out.data(), &[1.0, 0.0]);
    }

    #[test]
    fn zero_weights_return_initial_noise() {
        let mut rng = SeededRng::new(1);
        let n = sample_gaussian(5, Dims::flat(7), &mut rng).unwrap();
        let pred = sample_gaussian(5, Dims::flat(7), &mut rng).unwrap();
        let out = rectify(&pred, &n, &[0.0; 5]).unwrap();
        for (a, b) in out.data().iter().zip(n.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_omega() {
        let n = col(&[1.0, -1.0]);
        assert!(matches!(rectify(&n, &n, &[0.5]), Err(Error::Shape(_))));
        assert!(matches!(rectify(&n, &n, &[0.5, 1.5]), Err(Error::InvalidParameter(_))));
        assert!(rectify(&n, &n, &[-0.1, 0.5]).is_err());
    }

    #[test]
    fn window_membership() {
        assert!((0..50).all(|j| !in_window(j, 50, Window::disabled())));
        assert!((0..50).all(|j| in_window(j, 50, Window::full())));
        let tau = Window::new(0.0, 0.6).unwrap();
        let on: Vec<usize> = (0..50).filter(|&j| in_window(j, 50, tau)).collect();
        assert_eq!(on, (0..30).collect::<Vec<_>>());
        assert!(Window::new(0.6, 0.2).is_err());
        assert!(Window::new(-0.1, 0.2).is_err());
        assert!(Window::new(0.0, 1.1).is_err());
    }

    #[test]
    fn ramp_shape() {
        assert_eq!(omega_ramp(1, 0.5).unwrap(), vec![1.0]);
        assert_eq!(omega_ramp(3, 0.5).unwrap(), vec![1.0, 0.75, 0.5]);
        assert_eq!(omega_ramp(5, 1.0).unwrap(), vec![1.0; 5]);
        assert!(omega_ramp(4, 1.5).is_err());
    }

    #[test]
    fn input_unmodified() {
        let n = col(&[1.0, 2.0]);
        let p = col(&[0.0, 0.5]);
        let (n0, p0) = (n.clone(), p.clone());
        rectify(&p, &n, &[0.3, 0.7]).unwrap();
        assert_eq!((n, p), (n0, p0));
    }

    fn video_strategy() -> impl Strategy<Value = (VideoLatent, VideoLatent, Vec<f64>, f64)> {
        (1usize..6, 1usize..8).prop_flat_map(|(l, d)| {
            (
                prop::collection::vec(-5.0f64..5.0, l * d),
                prop::collection::vec(-5.0f64..5.0, l * d),
                prop::collection::vec(0.0f64..=1.0, l),
                -3.0f64..3.0,
            )
                .prop_map(move |(a, b, w, c)| {
                    (
                        VideoLatent::new(a, l, Dims::flat(d)).unwrap(),
                        VideoLatent::new(b, l, Dims::flat(d)).unwrap(),
                        w,
                        c,
                    )
                })
        })
    }

    proptest! {
        #[test]
        fn first_frame_is_initial_noise((pred, n, w, _c) in video_strategy()) {
            let out = rectify(&pred, &n, &w).unwrap();
            for (a, b) in out.frame(0).iter().zip(n.frame(0)) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn shift_equivariant((pred, n, w, c) in video_strategy()) {
            let base = rectify(&pred, &n, &w).unwrap();
            let shifted = rectify(&pred.map(|v| v + c), &n.map(|v| v + c), &w).unwrap();
            for (a, b) in shifted.data().iter().zip(base.data()) {
                prop_assert!((a - (b + c)).abs() <= 1e-12);
            }
        }

        #[test]
        fn unit_weight_adds_first_gap((pred, n, _w, _c) in video_strategy()) {
            let ones = vec![1.0; n.frames()];
            let out = rectify(&pred, &n, &ones).unwrap();
            let gap0: Vec<f64> = n.frame(0).iter().zip(pred.frame(0)).map(|(a, b)| a - b).collect();
            for i in 0..n.frames() {
                for ((o, p), g) in out.frame(i).iter().zip(pred.frame(i)).zip(&gap0) {
                    prop_assert!((o - (p + g)).abs() <= 1e-12);
                }
            }
        }
    }
}
