//! Latent-space fidelity, temporal coherence, and motion intensity.
//!
//! These stand in for embedding-based similarity scores: absolute values are
//! not comparable to scores computed on decoded pixels, only orderings and
//! trends are.

use crate::error::{Error, Result};
use crate::latent::{ImageLatent, VideoLatent};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine similarity, or `None` when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let (na, nb) = (dot(a, a).sqrt(), dot(b, b).sqrt());
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fidelity {
    pub cosine: Vec<Option<f64>>,
    pub mse: Vec<f64>,
}

/// Per-frame cosine similarity and mean-squared error against `reference`.
pub fn fidelity(video: &VideoLatent, reference: &ImageLatent) -> Result<Fidelity> {
    if video.dims() != reference.dims() {
        return Err(Error::Shape(format!("video frames {:?} vs reference {:?}", video.dims(), reference.dims())));
    }
    let r = reference.data();
    Ok(Fidelity {
        cosine: video.iter_frames().map(|f| cosine(f, r)).collect(),
        mse: video.iter_frames().map(|f| mse(f, r)).collect(),
    })
}

fn require_two_frames(video: &VideoLatent) -> Result<()> {
    if video.frames() < 2 {
        return Err(Error::Shape(format!("temporal metrics need L >= 2, got {}", video.frames())));
    }
    Ok(())
}

/// Mean cosine similarity of adjacent frames. Pairs involving a zero frame
/// are skipped; `None` when no pair is defined.
pub fn temporal_coherence(video: &VideoLatent) -> Result<Option<f64>> {
    require_two_frames(video)?;
    let vals: Vec<f64> = (1..video.frames()).filter_map(|i| cosine(video.frame(i - 1), video.frame(i))).collect();
    Ok((!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64))
}

/// Mean adjacent-frame L2 distance divided by `sqrt(D)`.
pub fn motion_intensity(video: &VideoLatent) -> Result<f64> {
    require_two_frames(video)?;
    let scale = (video.frame_len() as f64).sqrt();
    let total: f64 = (1..video.frames())
        .map(|i| {
            let d2: f64 = video.frame(i).iter().zip(video.frame(i - 1)).map(|(a, b)| (a - b).powi(2)).sum();
            d2.sqrt() / scale
        })
        .sum();
    Ok(total / (video.frames() - 1) as f64)
}

/// All metrics for one generated video. Temporal entries are `None` for
/// single-frame videos.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub per_frame_fidelity_cosine: Vec<Option<f64>>,
    pub per_frame_fidelity_mse: Vec<f64>,
    pub temporal_coherence: Option<f64>,
    pub motion_intensity: Option<f64>,
    pub mean_fidelity_cosine: Option<f64>,
    pub mean_fidelity_mse: f64,
}

impl MetricReport {
    pub fn compute(video: &VideoLatent, reference: &ImageLatent) -> Result<Self> {
        let fid = fidelity(video, reference)?;
        let (coherence, motion) = if video.frames() >= 2 {
            (temporal_coherence(video)?, Some(motion_intensity(video)?))
        } else {
            (None, None)
        };
        let defined: Vec<f64> = fid.cosine.iter().flatten().copied().collect();
        let mean_cos = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
        let mean_mse = fid.mse.iter().sum::<f64>() / fid.mse.len() as f64;
        Ok(Self {
            per_frame_fidelity_cosine: fid.cosine,
            per_frame_fidelity_mse: fid.mse,
            temporal_coherence: coherence,
            motion_intensity: motion,
            mean_fidelity_cosine: mean_cos,
            mean_fidelity_mse: mean_mse,
        })
    }
}
