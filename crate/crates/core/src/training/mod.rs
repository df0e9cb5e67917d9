//! Joint photometric and geometric optimization of the field over RGB-D frames.

mod adam;
mod loss;

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::camera::{ray_for_pixel, Ray};
use crate::dataset::{Dataset, Split};
use crate::encoding::EncodingConfig;
use crate::error::{Error, Result};
use crate::field::{self, DensityActivation, FieldConfig, FieldParams};
use crate::metrics::{score_frame, EvalReport};
use crate::render::{composite_tape, render_image, DepthPoint, RayBatch, RenderOptions, RenderedImage};
use crate::sampling::{ray_draws, sample_segments, valid_depth, SamplerConfig, SegmentSet, Strategy};

pub use adam::Adam;
pub use loss::{geometric_loss, photometric_loss, total_loss};

/// Every knob of a training run. Serializes as one flat JSON object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lambda_p: f64,
    pub lr: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_every: usize,
    pub batch_rays: usize,
    pub epochs: usize,
    pub seed: u64,
    pub geometric_eps: f64,
    pub variance_weight_detached: bool,
    pub depth_point: DepthPoint,
    /// Upper bound on samples recorded on one tape; batches are split into chunks of
    /// `chunk_rows / n_samples` rays.
    pub chunk_rows: usize,
    pub hidden_width: usize,
    pub color_width: usize,
    pub density_activation: DensityActivation,
    pub initial_density: f64,
    #[serde(flatten)]
    pub sampler: SamplerConfig,
    #[serde(flatten)]
    pub encoding: EncodingConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let field = FieldConfig::default();
        TrainConfig {
            lambda_p: 100.0,
            lr: 5e-4,
            lr_decay_factor: 0.5,
            lr_decay_every: 5,
            batch_rays: 2048,
            epochs: 20,
            seed: 0,
            geometric_eps: 1e-6,
            variance_weight_detached: true,
            depth_point: DepthPoint::Midpoint,
            chunk_rows: 4096,
            hidden_width: field.hidden_width,
            color_width: field.color_width,
            density_activation: field.density_activation,
            initial_density: field.initial_density,
            sampler: SamplerConfig::default(),
            encoding: EncodingConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let problems = [
            (self.lambda_p > 0.0, "lambda_p must be > 0"),
            (self.lr > 0.0, "lr must be > 0"),
            (self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0, "lr_decay_factor must be in (0, 1]"),
            (self.lr_decay_every >= 1, "lr_decay_every must be >= 1"),
            (self.batch_rays >= 1, "batch_rays must be >= 1"),
            (self.geometric_eps > 0.0, "geometric_eps must be > 0"),
            (self.chunk_rows >= 1, "chunk_rows must be >= 1"),
            (self.hidden_width >= 1 && self.color_width >= 1, "layer widths must be >= 1"),
            (self.initial_density > 0.0, "initial_density must be > 0"),
        ];
        if let Some((_, msg)) = problems.iter().find(|(ok, _)| !ok) {
            return Err(Error::Config(msg.to_string()));
        }
        self.sampler.validate()
    }

    pub fn field_config(&self) -> FieldConfig {
        FieldConfig {
            ipe_width: self.encoding.ipe_width(),
            dir_width: self.encoding.dir_width(),
            hidden_width: self.hidden_width,
            color_width: self.color_width,
            density_activation: self.density_activation,
            initial_density: self.initial_density,
        }
    }

    pub fn chunk_rays(&self) -> usize {
        (self.chunk_rows / self.sampler.n_samples.max(1)).max(1)
    }

    /// Overlays the keys of a flat JSON object. Unknown keys are rejected by name.
    pub fn merged(&self, overrides: &serde_json::Map<String, serde_json::Value>) -> Result<TrainConfig> {
        let mut base = match serde_json::to_value(self)? {
            serde_json::Value::Object(m) => m,
            _ => unreachable!("config serializes as an object"),
        };
        for (key, value) in overrides {
            if !base.contains_key(key) {
                return Err(Error::Config(format!("unknown config key '{key}'")));
            }
            base.insert(key.clone(), value.clone());
        }
        let cfg: TrainConfig = serde_json::from_value(serde_json::Value::Object(base))
            .map_err(|e| Error::Config(format!("bad config value: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Defaults overlaid with a JSON config file.
    pub fn from_file(path: &Path) -> Result<TrainConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        match serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))? {
            serde_json::Value::Object(m) => TrainConfig::default().merged(&m),
            _ => Err(Error::Config(format!("{}: config must be a JSON object", path.display()))),
        }
    }

    /// Inference settings matching this run. Without `with_depth` the uniform sampler
    /// is used, so no depth is needed at render time.
    pub fn render_options(&self, background: [f64; 3], with_depth: bool) -> RenderOptions {
        let mut sampler = self.sampler;
        if !with_depth {
            sampler.strategy = Strategy::Uniform;
        }
        RenderOptions {
            encoding: self.encoding,
            sampler,
            background,
            depth_point: self.depth_point,
            seed: self.seed,
            epoch: self.epochs.saturating_sub(1),
            chunk_rays: self.chunk_rays(),
        }
    }
}

/// Stepwise decay: `lr · factor^⌊epoch / every⌋`.
pub fn lr_schedule(cfg: &TrainConfig, epoch: usize) -> f64 {
    cfg.lr * cfg.lr_decay_factor.powi((epoch / cfg.lr_decay_every) as i32)
}

/// Parameters, optimizer state and position in the run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub params: FieldParams,
    pub adam: Adam,
    /// First epoch not yet run.
    pub next_epoch: usize,
    /// Optimizer steps taken so far.
    pub iteration: u64,
}

impl TrainState {
    pub fn fresh(cfg: &TrainConfig) -> TrainState {
        let params = FieldParams::init(cfg.field_config(), cfg.seed);
        let adam = Adam::new(params.tensors.iter().map(|p| p.values.len()));
        TrainState {
            params,
            adam,
            next_epoch: 0,
            iteration: 0,
        }
    }
}

/// One optimizer step. Loss values are sums over the batch, as optimized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub epoch: usize,
    pub iteration: u64,
    pub rays: usize,
    pub l_p: f64,
    pub l_g: f64,
    pub total: f64,
    pub grad_norm: f64,
    pub lr: f64,
    /// Rays whose depth-guided sampler fell back to uniform for lack of depth.
    pub fallback_rays: usize,
    pub wall_time: f64,
}

/// Per-ray means over one epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub rays: usize,
    pub l_p: f64,
    pub l_g: f64,
    pub total: f64,
    pub lr: f64,
    pub wall_time: f64,
}

/// Hooks called during [`train`]; an error aborts the run.
pub trait TrainObserver {
    fn on_step(&mut self, _report: &StepReport) -> Result<()> {
        Ok(())
    }

    fn on_epoch(&mut self, _state: &TrainState, _summary: &EpochSummary) -> Result<()> {
        Ok(())
    }
}

/// Observer that ignores everything.
pub struct Quiet;

impl TrainObserver for Quiet {}

/// Collects every report in memory.
#[derive(Default)]
pub struct Recorder {
    pub steps: Vec<StepReport>,
    pub epochs: Vec<EpochSummary>,
}

impl TrainObserver for Recorder {
    fn on_step(&mut self, report: &StepReport) -> Result<()> {
        self.steps.push(report.clone());
        Ok(())
    }

    fn on_epoch(&mut self, _state: &TrainState, summary: &EpochSummary) -> Result<()> {
        self.epochs.push(summary.clone());
        Ok(())
    }
}

/// A training ray: index into `Dataset::frames` and pixel index.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Sample {
    frame: u32,
    pixel: u32,
}

struct ChunkResult {
    grads: Vec<Vec<f64>>,
    l_p: f64,
    l_g: f64,
    fallback: usize,
}

const SHUFFLE_STREAM: u64 = 0x7368_7566;

fn chunk_pass(ds: &Dataset, cfg: &TrainConfig, params: &FieldParams, items: &[Sample], epoch: usize) -> Result<ChunkResult> {
    let intr = &ds.intrinsics;
    let mut rays: Vec<Ray> = Vec::with_capacity(items.len());
    let mut segments: Vec<SegmentSet> = Vec::with_capacity(items.len());
    let mut colors = Vec::with_capacity(3 * items.len());
    let mut depths = Vec::with_capacity(items.len());
    let mut valid = Vec::with_capacity(items.len());
    let mut fallback = 0;
    for s in items {
        let frame = &ds.frames[s.frame as usize];
        let p = s.pixel as usize;
        rays.push(ray_for_pixel(intr, &frame.pose, p / intr.width, p % intr.width, cfg.sampler.global_near, cfg.sampler.global_far));
        let depth = frame.depth[p];
        let seg = sample_segments(&cfg.sampler, depth, epoch, &mut ray_draws(cfg.seed, s.frame as usize, p, epoch));
        fallback += seg.fallback as usize;
        segments.push(seg);
        colors.extend_from_slice(&frame.color[3 * p..3 * p + 3]);
        let ok = valid_depth(depth);
        depths.push(if ok { depth } else { 0.0 });
        valid.push(if ok { 1.0 } else { 0.0 });
    }
    let batch = RayBatch::build(&rays, &segments, &cfg.encoding, cfg.depth_point);
    let (r, n) = (batch.rays, batch.samples);

    let mut tape = Tape::new();
    let leaves = params.register(&mut tape);
    let ipe = tape.constant(r * n, cfg.encoding.ipe_width(), batch.ipe);
    let dirs = tape.constant(r * n, cfg.encoding.dir_width(), batch.dirs);
    let out = field::forward(&mut tape, &params.config, &leaves, ipe, dirs)?;
    let deltas = tape.constant(r, n, batch.deltas);
    let points = tape.constant(r, n, batch.points);
    let comp = composite_tape(&mut tape, out.density, out.rgb, deltas, points, ds.background)?;
    let target_rgb = tape.constant(r, 3, colors);
    let target_depth = tape.constant(r, 1, depths);
    let mask = tape.constant(r, 1, valid);
    let l_p = photometric_loss(&mut tape, comp.color, target_rgb)?;
    let l_g = geometric_loss(
        &mut tape,
        comp.depth,
        comp.depth_var,
        target_depth,
        mask,
        cfg.geometric_eps,
        cfg.variance_weight_detached,
    )?;
    let total = total_loss(&mut tape, l_g, l_p, cfg.lambda_p)?;
    tape.backward(total)?;
    let grads = leaves
        .iter()
        .map(|&t| tape.grad(t).map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec))
        .collect();
    Ok(ChunkResult {
        grads,
        l_p: tape.scalar(l_p),
        l_g: tape.scalar(l_g),
        fallback,
    })
}

/// Optimizes the field on the training split of `ds`, continuing from `resume` when
/// given. Returns the state after the last epoch.
///
/// Results depend only on the configuration and seed: every ray owns its random stream
/// and chunk gradients are summed in a fixed order, so the thread count does not matter.
pub fn train(ds: &Dataset, cfg: &TrainConfig, resume: Option<TrainState>, observer: &mut dyn TrainObserver) -> Result<TrainState> {
    cfg.validate()?;
    let frames = ds.split_indices(Split::Train);
    if frames.is_empty() {
        return Err(Error::Config("dataset has no training frames".into()));
    }
    let mut state = match resume {
        Some(s) => {
            if s.params.config != cfg.field_config() {
                return Err(Error::Config("resumed parameters do not match the configured network".into()));
            }
            s
        }
        None => TrainState::fresh(cfg),
    };
    let pixels = ds.intrinsics.pixel_count();
    let all: Vec<Sample> = frames
        .iter()
        .flat_map(|&f| (0..pixels).map(move |p| Sample { frame: f as u32, pixel: p as u32 }))
        .collect();
    let start = Instant::now();

    for epoch in state.next_epoch..cfg.epochs {
        let lr = lr_schedule(cfg, epoch);
        let mut order = all.clone();
        order.shuffle(&mut crate::sampling::stream_rng(cfg.seed, &[SHUFFLE_STREAM, epoch as u64]));
        let (mut sum_p, mut sum_g) = (0.0, 0.0);
        for batch in order.chunks(cfg.batch_rays) {
            let parts: Vec<Result<ChunkResult>> = batch
                .par_chunks(cfg.chunk_rays())
                .map(|items| chunk_pass(ds, cfg, &state.params, items, epoch))
                .collect();
            let mut grads: Vec<Vec<f64>> = state.params.tensors.iter().map(|p| vec![0.0; p.values.len()]).collect();
            let (mut l_p, mut l_g, mut fallback) = (0.0, 0.0, 0);
            for part in parts {
                let part = part?;
                for (acc, g) in grads.iter_mut().zip(&part.grads) {
                    acc.iter_mut().zip(g).for_each(|(a, b)| *a += b);
                }
                l_p += part.l_p;
                l_g += part.l_g;
                fallback += part.fallback;
            }
            let total = l_g + cfg.lambda_p * l_p;
            if !total.is_finite() {
                return Err(Error::Divergence(format!("loss became {total} at epoch {epoch}, iteration {}", state.iteration)));
            }
            let grad_norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
            state
                .adam
                .update(state.params.tensors.iter_mut().map(|p| p.values.as_mut_slice()), &grads, lr)
                .map_err(|e| match e {
                    Error::Divergence(msg) => Error::Divergence(format!("{msg} at epoch {epoch}, iteration {}", state.iteration)),
                    other => other,
                })?;
            state.iteration += 1;
            sum_p += l_p;
            sum_g += l_g;
            observer.on_step(&StepReport {
                epoch,
                iteration: state.iteration,
                rays: batch.len(),
                l_p,
                l_g,
                total,
                grad_norm,
                lr,
                fallback_rays: fallback,
                wall_time: start.elapsed().as_secs_f64(),
            })?;
        }
        if !state.params.is_finite() {
            return Err(Error::Divergence(format!("parameters became non-finite in epoch {epoch}")));
        }
        state.next_epoch = epoch + 1;
        let n = order.len() as f64;
        let summary = EpochSummary {
            epoch,
            rays: order.len(),
            l_p: sum_p / n,
            l_g: sum_g / n,
            total: (sum_g + cfg.lambda_p * sum_p) / n,
            lr,
            wall_time: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: l_p {:.5} l_g {:.5} per ray, {:.1}s",
            summary.l_p,
            summary.l_g,
            summary.wall_time
        );
        observer.on_epoch(&state, &summary)?;
    }
    Ok(state)
}

/// Renders the given frames and scores them against the dataset.
///
/// Depth is scored against the clean reference depth when the frames carry one. With
/// `with_depth` the configured depth-guided sampler is steered by each frame's own
/// (possibly noisy) depth map.
pub fn evaluate(
    params: &FieldParams,
    ds: &Dataset,
    cfg: &TrainConfig,
    frames: &[usize],
    with_depth: bool,
) -> Result<(EvalReport, Vec<RenderedImage>)> {
    let opts = cfg.render_options(ds.background, with_depth);
    let (w, h) = (ds.intrinsics.width, ds.intrinsics.height);
    let mut scores = Vec::with_capacity(frames.len());
    let mut images = Vec::with_capacity(frames.len());
    for &i in frames {
        let frame = ds.frames.get(i).ok_or_else(|| Error::Config(format!("no frame {i} in dataset")))?;
        let guide = with_depth.then_some(frame.depth.as_slice());
        let img = render_image(params, &ds.intrinsics, &frame.pose, i, guide, &opts)?;
        scores.push(score_frame(i, &img.color, &frame.color, &img.depth, frame.reference_depth(), w, h)?);
        images.push(img);
    }
    Ok((EvalReport::from_frames(scores)?, images))
}
