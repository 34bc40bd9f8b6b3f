//! Reverse-process steps and the trajectory driver.

use std::fmt;
use std::path::Path;

use crate::denoisers::{ConditionVector, Denoiser};
use crate::error::{invalid, Error, Result};
use crate::latent::{sample_gaussian, VideoLatent};
use crate::rectifier::{in_window, noise_gap, rectify_with_gap, RectifierConfig};
use crate::rng::SeededRng;
use crate::schedule::NoiseSchedule;
use crate::vlt1;

/// Inference timesteps, strictly decreasing, on the training grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepPlan {
    steps: Vec<usize>,
}

impl StepPlan {
    pub fn new(steps: Vec<usize>, schedule: &NoiseSchedule) -> Result<Self> {
        if steps.is_empty() {
            return Err(invalid("step plan is empty"));
        }
        for &t in &steps {
            schedule.check_t(t)?;
        }
        if steps.windows(2).any(|w| w[1] >= w[0]) {
            return Err(invalid("step plan must be strictly decreasing"));
        }
        Ok(Self { steps })
    }

    pub fn steps(&self) -> &[usize] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn first(&self) -> usize {
        self.steps[0]
    }

    /// True when every step moves to `t - 1` and the plan ends at `t = 1`.
    pub fn is_full_grid(&self) -> bool {
        self.steps.windows(2).all(|w| w[0] == w[1] + 1) && *self.steps.last().unwrap() == 1
    }
}

/// `K` timesteps uniformly strided over `[1, T]`, starting at `T`.
pub fn make_step_plan(schedule: &NoiseSchedule, k: usize) -> Result<StepPlan> {
    make_step_plan_from(schedule, k, schedule.len())
}

/// `K` timesteps strided down from `start` (partial noising when `start < T`).
pub fn make_step_plan_from(schedule: &NoiseSchedule, k: usize, start: usize) -> Result<StepPlan> {
    schedule.check_t(start)?;
    if k == 0 || k > start {
        return Err(invalid(format!("step count {k} outside 1..={start}")));
    }
    let steps = (0..k).map(|j| start - j * start / k).collect();
    StepPlan::new(steps, schedule)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SamplerKind {
    Ddim { eta: f64 },
    Ancestral,
}

impl SamplerKind {
    pub fn ddim() -> Self {
        SamplerKind::Ddim { eta: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SamplerKind::Ddim { eta } if !(eta.is_finite() && (0.0..=1.0).contains(eta)) => {
                Err(invalid(format!("eta {eta} outside [0, 1]")))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SamplerKind::Ddim { .. } => "ddim",
            SamplerKind::Ancestral => "ancestral",
        }
    }

    pub fn eta(&self) -> f64 {
        match self {
            SamplerKind::Ddim { eta } => *eta,
            SamplerKind::Ancestral => 1.0,
        }
    }
}

impl Default for SamplerKind {
    fn default() -> Self {
        Self::ddim()
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn ddim_sigma(schedule: &NoiseSchedule, t: usize, t_prev: usize, eta: f64) -> f64 {
    let (ab, ab_prev) = (schedule.alpha_bar(t), schedule.alpha_bar(t_prev));
    eta * ((1.0 - ab_prev) / (1.0 - ab)).sqrt() * (1.0 - ab / ab_prev).sqrt()
}

/// One DDIM update with caller-supplied fresh noise (ignored when `sigma = 0`).
pub fn ddim_update(
    z_t: &VideoLatent,
    eps_hat: &VideoLatent,
    t: usize,
    t_prev: Option<usize>,
    schedule: &NoiseSchedule,
    eta: f64,
    fresh: Option<&VideoLatent>,
) -> Result<VideoLatent> {
    SamplerKind::Ddim { eta }.validate()?;
    schedule.check_t(t)?;
    z_t.ensure_same_shape(eps_hat, "ddim step")?;
    let ab = schedule.alpha_bar(t);
    let x0 = z_t.axpby(1.0 / ab.sqrt(), eps_hat, -(1.0 - ab).sqrt() / ab.sqrt())?;
    let Some(t_prev) = t_prev else {
        return Ok(x0);
    };
    schedule.check_t(t_prev)?;
    if t_prev >= t {
        return Err(invalid(format!("t_prev {t_prev} must be below t {t}")));
    }
    let ab_prev = schedule.alpha_bar(t_prev);
    let sigma = ddim_sigma(schedule, t, t_prev, eta);
    let dir = (1.0 - ab_prev - sigma * sigma).max(0.0).sqrt();
    let out = x0.axpby(ab_prev.sqrt(), eps_hat, dir)?;
    match fresh {
        Some(noise) if sigma > 0.0 => out.axpby(1.0, noise, sigma),
        _ => Ok(out),
    }
}

/// DDIM step; `t_prev = None` marks the final step and returns the predicted
/// clean latent. Draws from `rng` only when `eta > 0` and a `t_prev` exists.
pub fn ddim_step(
    z_t: &VideoLatent,
    eps_hat: &VideoLatent,
    t: usize,
    t_prev: Option<usize>,
    schedule: &NoiseSchedule,
    eta: f64,
    rng: &mut SeededRng,
) -> Result<VideoLatent> {
    let fresh =
        if eta > 0.0 && t_prev.is_some() { Some(sample_gaussian(z_t.frames(), z_t.dims(), rng)?) } else { None };
    ddim_update(z_t, eps_hat, t, t_prev, schedule, eta, fresh.as_ref())
}

/// Ancestral update with fixed variance `beta_t`, caller-supplied noise.
pub fn ancestral_update(
    z_t: &VideoLatent,
    eps_hat: &VideoLatent,
    t: usize,
    schedule: &NoiseSchedule,
    fresh: Option<&VideoLatent>,
) -> Result<VideoLatent> {
    schedule.check_t(t)?;
    z_t.ensure_same_shape(eps_hat, "ancestral step")?;
    let (alpha, beta, ab) = (schedule.alpha(t), schedule.beta(t), schedule.alpha_bar(t));
    let inv = 1.0 / alpha.sqrt();
    let mean = z_t.axpby(inv, eps_hat, -inv * beta / (1.0 - ab).sqrt())?;
    match fresh {
        Some(noise) if t > 1 => mean.axpby(1.0, noise, beta.sqrt()),
        _ => Ok(mean),
    }
}

/// Ancestral step from `t` to `t - 1`; no noise is drawn at `t = 1`.
pub fn ancestral_step(
    z_t: &VideoLatent,
    eps_hat: &VideoLatent,
    t: usize,
    schedule: &NoiseSchedule,
    rng: &mut SeededRng,
) -> Result<VideoLatent> {
    let fresh = if t > 1 { Some(sample_gaussian(z_t.frames(), z_t.dims(), rng)?) } else { None };
    ancestral_update(z_t, eps_hat, t, schedule, fresh.as_ref())
}

/// Snapshot of one reverse step.
#[derive(Debug, Clone)]
pub struct TrajectoryStep {
    pub index: usize,
    pub t: usize,
    /// Latent entering the step.
    pub latent: VideoLatent,
    pub predicted_noise: VideoLatent,
    /// Noise handed to the sampler (equal to `predicted_noise` outside the window).
    pub applied_noise: VideoLatent,
    pub rectified: bool,
    /// RMS of the gap between the initial and predicted noise, when a
    /// rectifier is attached.
    pub gap_rms: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
}

impl Trajectory {
    /// Writes `step_NNNN.vlt1` per step plus `final.vlt1` and an `index.csv`
    /// with columns `step,t,file`.
    pub fn dump(&self, dir: impl AsRef<Path>, final_latent: &VideoLatent) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut index = String::from("step,t,file\n");
        for s in &self.steps {
            let name = format!("step_{:04}.vlt1", s.index);
            vlt1::write_file(&s.latent, dir.join(&name))?;
            index.push_str(&format!("{},{},{}\n", s.index, s.t, name));
        }
        vlt1::write_file(final_latent, dir.join("final.vlt1"))?;
        index.push_str(&format!("{},0,final.vlt1\n", self.steps.len()));
        crate::harness::io::write_atomic(dir.join("index.csv"), index.as_bytes())
    }
}

/// Drives the reverse process over `plan`: predict, optionally rectify, step.
#[allow(clippy::too_many_arguments)]
pub fn run_reverse(
    z_start: &VideoLatent,
    denoiser: &dyn Denoiser,
    rectifier: Option<&RectifierConfig>,
    plan: &StepPlan,
    sampler: SamplerKind,
    schedule: &NoiseSchedule,
    cond: &ConditionVector,
    rng: &mut SeededRng,
    record_trajectory: bool,
) -> Result<(VideoLatent, Option<Trajectory>)> {
    sampler.validate()?;
    for &t in plan.steps() {
        schedule.check_t(t)?;
    }
    if let Some(r) = rectifier {
        r.check_against(z_start)?;
    }
    if sampler == SamplerKind::Ancestral && !plan.is_full_grid() {
        return Err(invalid("ancestral sampling needs the full timestep grid ending at t = 1"));
    }
    let k = plan.len();
    let mut z = z_start.clone();
    let mut trajectory = record_trajectory.then(Trajectory::default);
    for (j, &t) in plan.steps().iter().enumerate() {
        let predicted = denoiser.predict(&z, cond, t)?;
        z.ensure_same_shape(&predicted, "denoiser output")?;
        let (applied, rectified, gap_rms) = match rectifier {
            Some(r) => {
                let gap = noise_gap(&r.initial_noise, &predicted)?;
                let rms = gap.rms();
                if in_window(j, k, r.tau) {
                    (rectify_with_gap(&predicted, &gap, &r.omega)?, true, Some(rms))
                } else {
                    (predicted.clone(), false, Some(rms))
                }
            }
            None => (predicted.clone(), false, None),
        };
        let next = match sampler {
            SamplerKind::Ddim { eta } => {
                ddim_step(&z, &applied, t, plan.steps().get(j + 1).copied(), schedule, eta, rng)?
            }
            SamplerKind::Ancestral => ancestral_step(&z, &applied, t, schedule, rng)?,
        };
        if let Some(tr) = trajectory.as_mut() {
            tr.steps.push(TrajectoryStep {
                index: j,
                t,
                latent: z,
                predicted_noise: predicted,
                applied_noise: applied,
                rectified,
                gap_rms,
            });
        }
        z = next;
    }
    if !z.is_finite() {
        return Err(Error::Numeric("reverse process produced non-finite values".into()));
    }
    Ok((z, trajectory))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoisers::{oracle_noise_denoiser, zero_denoiser, FnDenoiser};
    use crate::latent::{repeat_image, Dims, ImageLatent};
    use crate::rectifier::Window;
    use crate::rng::Stream;
    use crate::schedule::{add_noise, make_linear_schedule};
    use approx::assert_relative_eq;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn scalar(v: f64) -> VideoLatent {
        VideoLatent::new(vec![v], 1, Dims::flat(1)).unwrap()
    }

    #[test]
    fn plan_full_grid_and_strided() {
        let s = NoiseSchedule::default();
        let full = make_step_plan(&s, 1000).unwrap();
        assert_eq!(full.steps().len(), 1000);
        assert_eq!(full.steps()[0], 1000);
        assert_eq!(*full.steps().last().unwrap(), 1);
        assert!(full.is_full_grid());

        // explicit stride enumeration
        let expected: Vec<usize> = (0..50).map(|j| 1000 - 20 * j).collect();
        assert_eq!(make_step_plan(&s, 50).unwrap().steps(), expected.as_slice());

        let ten = make_linear_schedule(10, 0.01, 0.1).unwrap();
        assert_eq!(make_step_plan(&ten, 1).unwrap().steps(), &[10]);
        assert!(make_step_plan(&ten, 0).is_err());
        assert!(make_step_plan(&ten, 11).is_err());
        assert_eq!(make_step_plan_from(&ten, 2, 6).unwrap().steps(), &[6, 3]);
    }

    #[test]
    fn ddim_exact_inversion() {
        let s = NoiseSchedule::default();
        let mut rng = SeededRng::new(5);
        let z = sample_gaussian(2, Dims::flat(8), &mut rng).unwrap();
        let n = sample_gaussian(2, Dims::flat(8), &mut rng).unwrap();
        let z_t = add_noise(&z, &n, 700, &s).unwrap();
        let pos = rng.position();
        let stepped = ddim_step(&z_t, &n, 700, Some(650), &s, 0.0, &mut rng).unwrap();
        let direct = add_noise(&z, &n, 650, &s).unwrap();
        for (a, b) in stepped.data().iter().zip(direct.data()) {
            assert_relative_eq!(*a, *b, epsilon = 1e-12);
        }
        let last = ddim_step(&z_t, &n, 700, None, &s, 0.0, &mut rng).unwrap();
        for (a, b) in last.data().iter().zip(z.data()) {
            assert_relative_eq!(*a, *b, epsilon = 1e-10);
        }
        assert_eq!(rng.position(), pos, "eta = 0 must not draw");
    }

    #[test]
    fn ddim_scalar_hand_value() {
        let s = make_linear_schedule(2, 0.1, 0.3).unwrap();
        let z2 = 0.63f64.sqrt() + 0.37f64.sqrt();
        let out = ddim_step(&scalar(z2), &scalar(1.0), 2, Some(1), &s, 0.0, &mut SeededRng::new(0)).unwrap();
        assert_relative_eq!(out.data()[0], 0.9f64.sqrt() + 0.1f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(out.data()[0], 1.2649110640673518, epsilon = 1e-12);
    }

    #[test]
    fn ddim_errors() {
        let s = make_linear_schedule(4, 0.1, 0.3).unwrap();
        let mut rng = SeededRng::new(0);
        let one = scalar(1.0);
        assert!(ddim_step(&one, &one, 2, Some(1), &s, 1.5, &mut rng).is_err());
        assert!(ddim_step(&one, &one, 2, Some(2), &s, 0.0, &mut rng).is_err());
        let two = VideoLatent::zeros(2, Dims::flat(1)).unwrap();
        assert!(matches!(ddim_step(&one, &two, 2, Some(1), &s, 0.0, &mut rng), Err(Error::Shape(_))));
    }

    #[test]
    fn ddim_with_eta_draws_noise() {
        let s = NoiseSchedule::default();
        let mut rng = SeededRng::with_stream(1, Stream::Sampler);
        let z = scalar(0.5);
        let a = ddim_step(&z, &z, 500, Some(480), &s, 1.0, &mut rng).unwrap();
        assert!(rng.position() > 0);
        let det = ddim_step(&z, &z, 500, Some(480), &s, 0.0, &mut rng).unwrap();
        assert_ne!(a, det);
    }

    #[test]
    fn ancestral_hand_value_and_terminal_step() {
        let s = make_linear_schedule(2, 0.1, 0.3).unwrap();
        let out = ancestral_update(&scalar(1.402), &scalar(1.0), 2, &s, None).unwrap();
        // (1/sqrt(0.7)) * (1.402 - 0.3/sqrt(0.37)), evaluated independently
        assert_relative_eq!(out.data()[0], 1.0862273913679252, epsilon = 1e-12);

        let mut rng = SeededRng::new(3);
        let before = rng.position();
        let last = ancestral_step(&scalar(0.7), &scalar(0.2), 1, &s, &mut rng).unwrap();
        assert_eq!(rng.position(), before);
        let expected = (0.7 - 0.1 / 0.1f64.sqrt() * 0.2) / 0.9f64.sqrt();
        assert_relative_eq!(last.data()[0], expected, epsilon = 1e-12);

        let zero_eps = ancestral_update(&scalar(2.0), &scalar(0.0), 2, &s, None).unwrap();
        assert_relative_eq!(zero_eps.data()[0], 2.0 / 0.7f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn single_step_zero_denoiser() {
        let s = NoiseSchedule::default();
        let plan = make_step_plan(&s, 1).unwrap();
        let z = sample_gaussian(2, Dims::flat(4), &mut SeededRng::new(1)).unwrap();
        let (out, _) = run_reverse(
            &z,
            &*zero_denoiser(),
            None,
            &plan,
            SamplerKind::ddim(),
            &s,
            &ConditionVector::none(),
            &mut SeededRng::new(2),
            false,
        )
        .unwrap();
        let k = 1.0 / s.alpha_bar(1000).sqrt();
        for (a, b) in out.data().iter().zip(z.data()) {
            assert_relative_eq!(*a, k * b, max_relative = 1e-12);
        }
    }

    #[test]
    fn oracle_trajectory_tracks_forward_process() {
        let s = NoiseSchedule::default();
        let mut rng = SeededRng::new(10);
        let clean = sample_gaussian(3, Dims::flat(16), &mut rng).unwrap();
        let n = sample_gaussian(3, Dims::flat(16), &mut rng).unwrap();
        let plan = make_step_plan(&s, 25).unwrap();
        let z_t = add_noise(&clean, &n, plan.first(), &s).unwrap();
        let oracle = oracle_noise_denoiser(n.clone());
        let (out, tr) = run_reverse(
            &z_t,
            &*oracle,
            None,
            &plan,
            SamplerKind::ddim(),
            &s,
            &ConditionVector::none(),
            &mut SeededRng::new(0),
            true,
        )
        .unwrap();
        let tr = tr.unwrap();
        assert_eq!(tr.steps.len(), 25);
        for step in &tr.steps {
            let expect = add_noise(&clean, &n, step.t, &s).unwrap();
            for (a, b) in step.latent.data().iter().zip(expect.data()) {
                assert!((a - b).abs() <= 1e-5 * b.abs().max(1.0));
            }
        }
        for (a, b) in out.data().iter().zip(clean.data()) {
            assert!((a - b).abs() <= 1e-5 * b.abs().max(1.0));
        }
    }

    #[test]
    fn denoiser_called_once_per_step() {
        let s = NoiseSchedule::default();
        let calls = AtomicUsize::new(0);
        let d = FnDenoiser::new("count", |z: &VideoLatent, _: &ConditionVector, _| {
            calls.fetch_add(1, Ordering::SeqCst);
            VideoLatent::zeros(z.frames(), z.dims())
        });
        let plan = make_step_plan(&s, 37).unwrap();
        let z = VideoLatent::zeros(2, Dims::flat(3)).unwrap();
        run_reverse(
            &z,
            &d,
            None,
            &plan,
            SamplerKind::ddim(),
            &s,
            &ConditionVector::none(),
            &mut SeededRng::new(0),
            false,
        )
        .unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 37);
    }

    #[test]
    fn ancestral_needs_full_grid_and_omega_length_checked() {
        let s = NoiseSchedule::default();
        let z = VideoLatent::zeros(2, Dims::flat(3)).unwrap();
        let c = ConditionVector::none();
        let mut rng = SeededRng::new(0);
        let plan = make_step_plan(&s, 50).unwrap();
        assert!(
            run_reverse(&z, &*zero_denoiser(), None, &plan, SamplerKind::Ancestral, &s, &c, &mut rng, false).is_err()
        );

        let wrong = RectifierConfig::new(vec![0.5; 3], Window::full(), z.clone());
        assert!(wrong.is_err());
        let three = VideoLatent::zeros(3, Dims::flat(3)).unwrap();
        let r = RectifierConfig::new(vec![0.5; 3], Window::full(), three).unwrap();
        assert!(matches!(
            run_reverse(&z, &*zero_denoiser(), Some(&r), &plan, SamplerKind::ddim(), &s, &c, &mut rng, false),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn empty_window_matches_no_rectifier() {
        let s = NoiseSchedule::default();
        let img = ImageLatent::from_vec(vec![0.5, -0.25, 1.0]).unwrap();
        let video = repeat_image(&img, 4).unwrap();
        let n = sample_gaussian(4, img.dims(), &mut SeededRng::new(4)).unwrap();
        let z_t = add_noise(&video, &n, 1000, &s).unwrap();
        let bias = FnDenoiser::new("half", |z: &VideoLatent, _: &ConditionVector, _| Ok(z.map(|v| 0.5 * v)));
        let r = RectifierConfig::new(vec![0.3; 4], Window::new(0.0, 0.0).unwrap(), n).unwrap();
        for (sampler, plan) in [
            (SamplerKind::Ddim { eta: 0.5 }, make_step_plan(&s, 20).unwrap()),
            (SamplerKind::Ancestral, make_step_plan(&s, 1000).unwrap()),
        ] {
            let c = ConditionVector::none();
            let mut rng_a = SeededRng::with_stream(9, Stream::Sampler);
            let mut rng_b = SeededRng::with_stream(9, Stream::Sampler);
            let (a, _) = run_reverse(&z_t, &bias, None, &plan, sampler, &s, &c, &mut rng_a, false).unwrap();
            let (b, _) = run_reverse(&z_t, &bias, Some(&r), &plan, sampler, &s, &c, &mut rng_b, false).unwrap();
            assert_eq!(a, b);
            assert_eq!(rng_a.position(), rng_b.position());
        }
    }
}
