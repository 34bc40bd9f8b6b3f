//! Drifting Gaussian blobs on small grids: a toy video distribution whose
//! latents can be viewed directly as grayscale frames.

use crate::denoisers::{PriorComponent, VideoPrior};
use crate::error::{invalid, Result};
use crate::latent::{Dims, ImageLatent, VideoLatent};
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq)]
pub struct BlobScene {
    /// `(rows, cols)`.
    pub grid: (usize, usize),
    /// Centre of the blob in frame 0, `(row, col)`.
    pub center: (f64, f64),
    /// Per-frame displacement, `(d_row, d_col)`.
    pub velocity: (f64, f64),
    /// Standard deviation of the Gaussian bump, in pixels.
    pub radius: f64,
    pub amplitude: f64,
    pub background: f64,
}

impl Default for BlobScene {
    fn default() -> Self {
        Self { grid: (16, 16), center: (4.0, 4.0), velocity: (0.5, 0.5), radius: 2.0, amplitude: 1.0, background: 0.0 }
    }
}

impl BlobScene {
    pub fn validate(&self) -> Result<()> {
        if self.grid.0 < 4 || self.grid.1 < 4 {
            return Err(invalid(format!("blob grid {:?} must be at least 4x4", self.grid)));
        }
        let finite = [self.center.0, self.center.1, self.velocity.0, self.velocity.1, self.amplitude, self.background];
        if !(self.radius.is_finite() && self.radius > 0.0) || finite.iter().any(|v| !v.is_finite()) {
            return Err(invalid("blob radius must be positive and all parameters finite"));
        }
        if self.amplitude < 0.0 || self.background < 0.0 {
            return Err(invalid("blob amplitude and background must be non-negative"));
        }
        Ok(())
    }

    pub fn dims(&self) -> Dims {
        Dims::grid(self.grid.0, self.grid.1)
    }
}

/// Renders frame `frame_index`, row-major. Off-grid centres give partial or
/// empty bumps.
pub fn render_blob_frame(scene: &BlobScene, frame_index: usize) -> ImageLatent {
    let (rows, cols) = scene.grid;
    let cr = scene.center.0 + frame_index as f64 * scene.velocity.0;
    let cc = scene.center.1 + frame_index as f64 * scene.velocity.1;
    let denom = 2.0 * scene.radius * scene.radius;
    let data = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r, c)))
        .map(|(r, c)| {
            let d2 = (r as f64 - cr).powi(2) + (c as f64 - cc).powi(2);
            scene.background + scene.amplitude * (-d2 / denom).exp()
        })
        .collect();
    ImageLatent::new(data, scene.dims()).expect("rendered frame matches grid dims")
}

pub fn render_blob_video(scene: &BlobScene, frames: usize) -> Result<VideoLatent> {
    let data = (0..frames).flat_map(|i| render_blob_frame(scene, i).into_data()).collect();
    VideoLatent::new(data, frames, scene.dims())
}

/// One-component prior whose frame means follow the blob trajectory.
pub fn blob_prior(scene: &BlobScene, frames: usize, sigma: f64) -> Result<VideoPrior> {
    scene.validate()?;
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(invalid(format!("prior sigma {sigma} must be positive")));
    }
    let means = render_blob_video(scene, frames)?;
    VideoPrior::new("blob", vec![PriorComponent::new(1.0, means, sigma * sigma)])
}

/// Reference image: frame 0 of a draw from the prior.
pub fn sample_reference(prior: &VideoPrior, rng: &mut SeededRng) -> ImageLatent {
    let c = &prior.components()[prior.pick_component(rng)];
    let sd = c.variance.sqrt();
    let data = c.means.frame(0).iter().map(|m| m + sd * rng.standard_normal()).collect();
    ImageLatent::new(data, prior.dims()).expect("prior frame is finite")
}
