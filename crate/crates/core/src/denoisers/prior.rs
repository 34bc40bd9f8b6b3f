use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::latent::{Dims, ImageLatent, VideoLatent};
use crate::rng::SeededRng;
use crate::vlt1;

/// One mixture component: per-frame means and an isotropic variance shared by
/// every coordinate of every frame. Frames are independent given the component.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorComponent {
    pub weight: f64,
    pub means: VideoLatent,
    pub variance: f64,
}

impl PriorComponent {
    pub fn new(weight: f64, means: VideoLatent, variance: f64) -> Self {
        Self { weight, means, variance }
    }

    /// Means drifting linearly: frame `i` has mean `base + i * velocity`.
    pub fn drifting(weight: f64, base: &ImageLatent, velocity: &[f64], frames: usize, variance: f64) -> Result<Self> {
        if velocity.len() != base.len() {
            return Err(Error::Shape(format!("drift has {} values, mean has {}", velocity.len(), base.len())));
        }
        let data =
            (0..frames).flat_map(|i| base.data().iter().zip(velocity).map(move |(m, v)| m + i as f64 * v)).collect();
        Ok(Self::new(weight, VideoLatent::new(data, frames, base.dims())?, variance))
    }
}

/// Analytic distribution over video latents.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoPrior {
    id: String,
    components: Vec<PriorComponent>,
}

const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

impl VideoPrior {
    pub fn new(id: impl Into<String>, components: Vec<PriorComponent>) -> Result<Self> {
        let first = components.first().ok_or_else(|| invalid("prior needs at least one component"))?;
        for (k, c) in components.iter().enumerate() {
            if !(c.weight.is_finite() && c.weight > 0.0) {
                return Err(invalid(format!("component {k} weight {} must be positive", c.weight)));
            }
            if !(c.variance.is_finite() && c.variance > 0.0) {
                return Err(invalid(format!(
                    "component {k} variance {} must be positive (degenerate prior)",
                    c.variance
                )));
            }
            c.means.ensure_same_shape(&first.means, "prior component means")?;
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(invalid(format!("component weights sum to {total}, expected 1")));
        }
        Ok(Self { id: id.into(), components })
    }

    pub fn single(id: impl Into<String>, means: VideoLatent, variance: f64) -> Result<Self> {
        Self::new(id, vec![PriorComponent::new(1.0, means, variance)])
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn components(&self) -> &[PriorComponent] {
        &self.components
    }

    pub fn frames(&self) -> usize {
        self.components[0].means.frames()
    }

    pub fn dims(&self) -> Dims {
        self.components[0].means.dims()
    }

    pub(crate) fn pick_component(&self, rng: &mut SeededRng) -> usize {
        if self.components.len() == 1 {
            return 0;
        }
        let u = rng.uniform();
        let mut acc = 0.0;
        for (k, c) in self.components.iter().enumerate() {
            acc += c.weight;
            if u < acc {
                return k;
            }
        }
        self.components.len() - 1
    }

    /// Draws a full video from the prior.
    pub fn sample(&self, rng: &mut SeededRng) -> VideoLatent {
        let c = &self.components[self.pick_component(rng)];
        let sd = c.variance.sqrt();
        let data = c.means.data().iter().map(|m| m + sd * rng.standard_normal()).collect();
        VideoLatent::from_raw(data, self.frames(), self.dims())
    }

    /// Loads a prior from its text description; `means` paths resolve
    /// relative to the description file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: PriorFile = toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        file.build(base)
    }

    /// Writes `<dir>/<name>.toml` plus `<dir>/<name>.means.vlt1` holding every
    /// component's per-frame means (values are stored as `f32`).
    pub fn save(&self, dir: impl AsRef<Path>, name: &str) -> Result<std::path::PathBuf> {
        let dir = dir.as_ref();
        let means_name = format!("{name}.means.vlt1");
        let stacked: Vec<f64> = self.components.iter().flat_map(|c| c.means.data().iter().copied()).collect();
        let stacked = VideoLatent::new(stacked, self.components.len() * self.frames(), self.dims())?;
        vlt1::write_file(&stacked, dir.join(&means_name))?;
        let file = PriorFile {
            id: self.id.clone(),
            frames: self.frames(),
            means: means_name,
            weights: self.components.iter().map(|c| c.weight).collect(),
            variances: self.components.iter().map(|c| c.variance).collect(),
            drift: None,
        };
        let text = toml::to_string(&file).map_err(|e| Error::Parse(e.to_string()))?;
        let out = dir.join(format!("{name}.toml"));
        crate::harness::io::write_atomic(&out, text.as_bytes())?;
        Ok(out)
    }
}

/// On-disk prior description.
///
/// `means` names a VLT1 file holding either one base frame per component
/// (expanded with `drift`) or `frames` consecutive frames per component.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PriorFile {
    id: String,
    frames: usize,
    means: String,
    weights: Vec<f64>,
    variances: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    drift: Option<Vec<f64>>,
}

impl PriorFile {
    fn build(&self, base: &Path) -> Result<VideoPrior> {
        let k = self.weights.len();
        if k == 0 || self.variances.len() != k {
            return Err(invalid(format!("prior has {} weights and {} variances", k, self.variances.len())));
        }
        if self.frames == 0 {
            return Err(invalid("prior frames must be at least 1"));
        }
        let means = vlt1::read_file(base.join(&self.means))?;
        let d = means.frame_len();
        let components = if means.frames() == k {
            let zero = vec![0.0; d];
            let drift = self.drift.as_deref().unwrap_or(&zero);
            (0..k)
                .map(|c| {
                    PriorComponent::drifting(
                        self.weights[c],
                        &means.frame_image(c),
                        drift,
                        self.frames,
                        self.variances[c],
                    )
                })
                .collect::<Result<Vec<_>>>()?
        } else if means.frames() == k * self.frames {
            if self.drift.is_some() {
                return Err(invalid("drift is only allowed with one base frame per component"));
            }
            (0..k)
                .map(|c| {
                    let start = c * self.frames * d;
                    let data = means.data()[start..start + self.frames * d].to_vec();
                    Ok(PriorComponent::new(
                        self.weights[c],
                        VideoLatent::new(data, self.frames, means.dims())?,
                        self.variances[c],
                    ))
                })
                .collect::<Result<Vec<_>>>()?
        } else {
            return Err(Error::Shape(format!(
                "means file has {} frames; expected {k} or {}",
                means.frames(),
                k * self.frames
            )));
        };
        VideoPrior::new(self.id.clone(), components)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(frames: usize, vals: &[f64]) -> VideoLatent {
        VideoLatent::new(vals.to_vec(), frames, Dims::flat(vals.len() / frames)).unwrap()
    }

    #[test]
    fn validates_components() {
        let m = flat(1, &[0.0, 1.0]);
        assert!(VideoPrior::single("p", m.clone(), 0.0).is_err());
        assert!(VideoPrior::new("p", vec![]).is_err());
        let bad_weights = vec![PriorComponent::new(0.3, m.clone(), 1.0), PriorComponent::new(0.3, m.clone(), 1.0)];
        assert!(VideoPrior::new("p", bad_weights).is_err());
        let mismatched =
            vec![PriorComponent::new(0.5, m.clone(), 1.0), PriorComponent::new(0.5, flat(1, &[0.0, 1.0, 2.0]), 1.0)];
        assert!(matches!(VideoPrior::new("p", mismatched), Err(Error::Shape(_))));
    }

    #[test]
    fn drifting_means() {
        let base = ImageLatent::from_vec(vec![1.0, 2.0]).unwrap();
        let c = PriorComponent::drifting(1.0, &base, &[0.5, -1.0], 3, 0.1).unwrap();
        assert_eq!(c.means.frame(2), &[2.0, 0.0]);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let comps = vec![
            PriorComponent::new(0.25, flat(2, &[0.5, -1.0, 1.5, 2.0]), 0.2),
            PriorComponent::new(0.75, flat(2, &[-0.5, 1.0, 0.25, -2.0]), 0.5),
        ];
        let prior = VideoPrior::new("two", comps).unwrap();
        let path = prior.save(dir.path(), "two").unwrap();
        let back = VideoPrior::load(&path).unwrap();
        assert_eq!(back, prior);
    }

    #[test]
    fn file_with_drift() {
        let dir = tempfile::tempdir().unwrap();
        vlt1::write_file(&flat(1, &[1.0, 2.0]), dir.path().join("m.vlt1")).unwrap();
        std::fs::write(
            dir.path().join("p.toml"),
            "id = \"d\"\nframes = 4\nmeans = \"m.vlt1\"\nweights = [1.0]\nvariances = [0.1]\ndrift = [0.5, 0.0]\n",
        )
        .unwrap();
        let p = VideoPrior::load(dir.path().join("p.toml")).unwrap();
        assert_eq!(p.frames(), 4);
        assert_eq!(p.components()[0].means.frame(3), &[2.5, 2.0]);
    }
}
