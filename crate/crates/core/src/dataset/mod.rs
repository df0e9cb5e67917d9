//! RGB-D frame sets: synthetic generation with exact depth, inverse-depth noise, and
//! on-disk storage.

mod io;
mod scene;

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{hemisphere_poses, ray_for_pixel, Intrinsics, Pose};
use crate::error::{Error, Result};
use crate::sampling::stream_rng;

pub use io::{load_dataset, read_pfm, read_png, save_dataset, write_pfm, write_png, MANIFEST_FILE};
pub use scene::{Hit, Primitive, Scene, Shape, Texture, SCENE_NAMES};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    #[default]
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RgbdFrame {
    /// H×W×3 in `[0, 1]`.
    pub color: Vec<f64>,
    /// Meters along the ray, 0 for holes.
    pub depth: Vec<f64>,
    /// Noise-free depth kept next to noisy supervision for scoring.
    pub clean_depth: Option<Vec<f64>>,
    pub pose: Pose,
    pub split: Split,
}

impl RgbdFrame {
    /// Depth to score against: the clean map when one was kept.
    pub fn reference_depth(&self) -> &[f64] {
        self.clean_depth.as_deref().unwrap_or(&self.depth)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub intrinsics: Intrinsics,
    pub background: [f64; 3],
    pub near: f64,
    pub far: f64,
    pub frames: Vec<RgbdFrame>,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        if !(self.near > 0.0 && self.near < self.far) {
            return Err(Error::Config(format!("dataset bounds must satisfy 0 < near < far, got {}..{}", self.near, self.far)));
        }
        let pixels = self.intrinsics.pixel_count();
        for (i, f) in self.frames.iter().enumerate() {
            let sizes_ok = f.color.len() == 3 * pixels
                && f.depth.len() == pixels
                && f.clean_depth.as_ref().is_none_or(|d| d.len() == pixels);
            if !sizes_ok {
                return Err(Error::Config(format!("frame {i} does not match the {}x{} intrinsics", self.intrinsics.width, self.intrinsics.height)));
            }
            if f.depth.iter().any(|d| !d.is_finite() || *d < 0.0) || f.color.iter().any(|c| !c.is_finite()) {
                return Err(Error::Config(format!("frame {i} has non-finite color or negative depth")));
            }
        }
        Ok(())
    }

    /// Indices of frames in `split`.
    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        (0..self.frames.len()).filter(|&i| self.frames[i].split == split).collect()
    }

    /// Copy keeping only the frames of `split`.
    pub fn subset(&self, split: Split) -> Dataset {
        Dataset {
            frames: self.frames.iter().filter(|f| f.split == split).cloned().collect(),
            ..self.clone()
        }
    }
}

/// Traces every pixel of every pose.
pub fn render_scene(scene: &Scene, poses: &[Pose], intr: &Intrinsics) -> Vec<RgbdFrame> {
    poses
        .par_iter()
        .map(|pose| {
            let mut color = Vec::with_capacity(3 * intr.pixel_count());
            let mut depth = Vec::with_capacity(intr.pixel_count());
            for row in 0..intr.height {
                for col in 0..intr.width {
                    let ray = ray_for_pixel(intr, pose, row, col, 0.0, f64::INFINITY);
                    let (c, d) = scene.trace(&ray.origin, &ray.direction);
                    color.extend_from_slice(&c);
                    depth.push(d);
                }
            }
            RgbdFrame {
                color,
                depth,
                clean_depth: None,
                pose: *pose,
                split: Split::Train,
            }
        })
        .collect()
}

/// Gaussian noise on inverse depth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Standard deviation of the perturbation of `1/D`, in 1/m.
    pub inv_depth_sigma: f64,
    pub seed: u64,
}

/// Stream tag separating noise draws from other uses of the same seed.
const NOISE_STREAM: u64 = 0x6e6f_6973_65;

/// `D' = 1 / (1/D + η)` on valid pixels, clamped to `(0, far]`; holes stay 0.
///
/// `frame_id` keys the random stream so every frame gets independent noise.
pub fn apply_noise(depth: &[f64], model: &NoiseModel, frame_id: usize, far: f64) -> Result<Vec<f64>> {
    if !(model.inv_depth_sigma >= 0.0) {
        return Err(Error::Config(format!("noise sigma must be >= 0, got {}", model.inv_depth_sigma)));
    }
    if model.inv_depth_sigma == 0.0 {
        return Ok(depth.to_vec());
    }
    let normal = Normal::new(0.0, model.inv_depth_sigma).expect("sigma checked above");
    let mut rng = stream_rng(model.seed, &[NOISE_STREAM, frame_id as u64]);
    Ok(depth
        .iter()
        .map(|&d| {
            if d > 0.0 {
                let inv = 1.0 / d + normal.sample(&mut rng);
                if inv > 1.0 / far {
                    1.0 / inv
                } else {
                    far
                }
            } else {
                d
            }
        })
        .collect())
}

/// Settings for [`generate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerateConfig {
    pub scene: String,
    pub views: usize,
    /// Extra held-out views marked as the test split.
    pub test_views: usize,
    pub width: usize,
    pub height: usize,
    pub fov_deg: f64,
    pub camera_radius: f64,
    pub near: f64,
    pub far: f64,
    pub seed: u64,
    pub noise_sigma: f64,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            scene: "cube".into(),
            views: 8,
            test_views: 0,
            width: 64,
            height: 64,
            fov_deg: 40.0,
            camera_radius: 4.0,
            near: 1.0,
            far: 7.0,
            seed: 0,
            noise_sigma: 0.0,
        }
    }
}

/// Renders a named scene from hemisphere cameras, adding depth noise to the training
/// views when requested. Noisy frames keep their clean depth alongside.
pub fn generate(cfg: &GenerateConfig) -> Result<Dataset> {
    let scene = Scene::named(&cfg.scene)?;
    if cfg.views == 0 {
        return Err(Error::Config("at least one training view is required".into()));
    }
    let intr = Intrinsics::from_fov(cfg.width, cfg.height, cfg.fov_deg)?;
    let poses = hemisphere_poses(cfg.views + cfg.test_views, cfg.camera_radius, cfg.seed)?;
    let mut frames = render_scene(&scene, &poses, &intr);
    let model = NoiseModel {
        inv_depth_sigma: cfg.noise_sigma,
        seed: cfg.seed,
    };
    for (i, frame) in frames.iter_mut().enumerate() {
        if i >= cfg.views {
            frame.split = Split::Test;
        } else if cfg.noise_sigma > 0.0 {
            let noisy = apply_noise(&frame.depth, &model, i, cfg.far)?;
            frame.clean_depth = Some(std::mem::replace(&mut frame.depth, noisy));
        }
    }
    let ds = Dataset {
        intrinsics: intr,
        background: scene.background,
        near: cfg.near,
        far: cfg.far,
        frames,
    };
    ds.validate()?;
    Ok(ds)
}
