//! Latent image and video tensors.
//!
//! The codec is the identity: latents are the working representation, stored
//! as flattened `C x H x W` grids in `f64`.

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Spatial layout of one latent frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Dims {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width }
    }

    /// A `1 x 1 x d` layout for plain vectors.
    pub fn flat(d: usize) -> Self {
        Self::new(1, 1, d)
    }

    /// Single-channel grid.
    pub fn grid(height: usize, width: usize) -> Self {
        Self::new(1, height, width)
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Default for Dims {
    fn default() -> Self {
        Self::grid(16, 16)
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::Numeric(format!("non-finite latent value at index {i}"))),
        None => Ok(()),
    }
}

/// A single latent frame (the reference image `z^0`).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageLatent {
    data: Vec<f64>,
    dims: Dims,
}

impl ImageLatent {
    pub fn new(data: Vec<f64>, dims: Dims) -> Result<Self> {
        if dims.is_empty() || data.len() != dims.len() {
            return Err(Error::Shape(format!("image data length {} does not match dims {:?}", data.len(), dims)));
        }
        check_finite(&data)?;
        Ok(Self { data, dims })
    }

    pub fn from_vec(data: Vec<f64>) -> Result<Self> {
        let dims = Dims::flat(data.len());
        Self::new(data, dims)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }
}

/// An `L`-frame stack of equally shaped latent frames, stored frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoLatent {
    data: Vec<f64>,
    frames: usize,
    dims: Dims,
}

impl VideoLatent {
    pub fn new(data: Vec<f64>, frames: usize, dims: Dims) -> Result<Self> {
        if frames == 0 {
            return Err(Error::Shape("video must have at least one frame".into()));
        }
        if dims.is_empty() || data.len() != frames * dims.len() {
            return Err(Error::Shape(format!(
                "video data length {} does not match {} frames of {:?}",
                data.len(),
                frames,
                dims
            )));
        }
        check_finite(&data)?;
        Ok(Self { data, frames, dims })
    }

    pub fn from_frames(frames: Vec<Vec<f64>>, dims: Dims) -> Result<Self> {
        let count = frames.len();
        if let Some(bad) = frames.iter().position(|f| f.len() != dims.len()) {
            return Err(Error::Shape(format!("frame {bad} has length {}, expected {}", frames[bad].len(), dims.len())));
        }
        Self::new(frames.concat(), count, dims)
    }

    pub fn zeros(frames: usize, dims: Dims) -> Result<Self> {
        Self::new(vec![0.0; frames * dims.len()], frames, dims)
    }

    /// Builds a latent without validation; callers guarantee shape.
    pub(crate) fn from_raw(data: Vec<f64>, frames: usize, dims: Dims) -> Self {
        debug_assert_eq!(data.len(), frames * dims.len());
        Self { data, frames, dims }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// Values per frame (`D`).
    pub fn frame_len(&self) -> usize {
        self.dims.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        let d = self.frame_len();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn frame_mut(&mut self, i: usize) -> &mut [f64] {
        let d = self.frame_len();
        &mut self.data[i * d..(i + 1) * d]
    }

    pub fn iter_frames(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.frame_len())
    }

    pub fn frame_image(&self, i: usize) -> ImageLatent {
        ImageLatent { data: self.frame(i).to_vec(), dims: self.dims }
    }

    pub fn same_shape(&self, other: &VideoLatent) -> bool {
        self.frames == other.frames && self.dims == other.dims
    }

    pub fn ensure_same_shape(&self, other: &VideoLatent, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{what}: {} frames of {:?} vs {} frames of {:?}",
                self.frames, self.dims, other.frames, other.dims
            )))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Elementwise `a * self + b * other`.
    pub fn axpby(&self, a: f64, other: &VideoLatent, b: f64) -> Result<VideoLatent> {
        self.ensure_same_shape(other, "linear combination")?;
        let data = self.data.iter().zip(&other.data).map(|(x, y)| a * x + b * y).collect();
        Ok(Self::from_raw(data, self.frames, self.dims))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> VideoLatent {
        Self::from_raw(self.data.iter().copied().map(f).collect(), self.frames, self.dims)
    }

    pub fn sub(&self, other: &VideoLatent) -> Result<VideoLatent> {
        self.axpby(1.0, other, -1.0)
    }

    pub fn add(&self, other: &VideoLatent) -> Result<VideoLatent> {
        self.axpby(1.0, other, 1.0)
    }
}

/// Broadcasts a single image across `frames` frames.
pub fn repeat_image(z0: &ImageLatent, frames: usize) -> Result<VideoLatent> {
    if frames == 0 {
        return Err(Error::Shape("repeat_image needs at least one frame".into()));
    }
    let data = z0.data.repeat(frames);
    Ok(VideoLatent::from_raw(data, frames, z0.dims))
}

/// I.i.d. standard normal video, drawn frame-major from `rng`.
pub fn sample_gaussian(frames: usize, dims: Dims, rng: &mut SeededRng) -> Result<VideoLatent> {
    if frames == 0 || dims.is_empty() {
        return Err(Error::Shape("sample_gaussian needs L >= 1 and D >= 1".into()));
    }
    let mut data = vec![0.0; frames * dims.len()];
    rng.fill_standard_normal(&mut data);
    Ok(VideoLatent::from_raw(data, frames, dims))
}
