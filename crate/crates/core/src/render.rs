//! Quadrature compositing of per-segment density and color into pixel color, depth and
//! depth variance, plus whole-image rendering.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Axis, Tape, Tensor};
use crate::camera::{ray_for_pixel, Intrinsics, Pose, Ray};
use crate::encoding::{encode_direction_into, frustum_gaussian, integrated_pe_into, EncodingConfig};
use crate::error::Result;
use crate::field::{self, FieldParams};
use crate::sampling::{ray_draws, sample_segments, SamplerConfig, SegmentSet};

/// Point of each segment used for the depth estimate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthPoint {
    #[default]
    Midpoint,
    Lower,
}

impl DepthPoint {
    pub fn points(self, segments: &SegmentSet) -> Vec<f64> {
        match self {
            DepthPoint::Midpoint => segments.midpoints().collect(),
            DepthPoint::Lower => segments.boundaries[..segments.count()].to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderResult {
    pub color: [f64; 3],
    pub depth: f64,
    pub depth_var: f64,
    pub weights: Vec<f64>,
    /// Transmittance left after the last segment.
    pub residual: f64,
}

/// Composites one ray. `density` has one entry per segment, `rgb` three.
pub fn composite(
    segments: &SegmentSet,
    density: &[f64],
    rgb: &[f64],
    background: [f64; 3],
    depth_point: DepthPoint,
) -> RenderResult {
    let n = segments.count();
    assert_eq!(density.len(), n, "one density per segment");
    assert_eq!(rgb.len(), 3 * n, "one color per segment");
    let points = depth_point.points(segments);

    let mut weights = Vec::with_capacity(n);
    let mut optical_depth = 0.0f64;
    for (tau, delta) in density.iter().zip(segments.deltas()) {
        assert!(delta >= 0.0, "negative segment length {delta}");
        let step = tau * delta;
        let transmittance = (-optical_depth).exp();
        weights.push(transmittance * (1.0 - (-step).exp()));
        optical_depth += step;
    }
    let residual = (-optical_depth).exp();

    let mut color = [0.0; 3];
    for (i, w) in weights.iter().enumerate() {
        for k in 0..3 {
            color[k] += w * rgb[3 * i + k];
        }
    }
    for k in 0..3 {
        color[k] += residual * background[k];
    }
    let depth: f64 = weights.iter().zip(&points).map(|(w, t)| w * t).sum();
    let depth_var = weights.iter().zip(&points).map(|(w, t)| w * (depth - t) * (depth - t)).sum();
    RenderResult {
        color,
        depth,
        depth_var,
        weights,
        residual,
    }
}

/// Per-ray transmittance `T_1..T_{N+1}` for one ray.
pub fn transmittance(segments: &SegmentSet, density: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(density.len() + 1);
    let mut acc = 0.0f64;
    out.push(1.0);
    for (tau, delta) in density.iter().zip(segments.deltas()) {
        acc += tau * delta;
        out.push((-acc).exp());
    }
    out
}

/// Batched, differentiable compositing outputs.
#[derive(Clone, Copy, Debug)]
pub struct CompositeTensors {
    /// R×3
    pub color: Tensor,
    /// R×1
    pub depth: Tensor,
    /// R×1
    pub depth_var: Tensor,
    /// R×N
    pub weights: Tensor,
    /// R×1
    pub residual: Tensor,
}

/// Differentiable compositing of `rays` rays with `n` segments each.
///
/// `density` is (R·N)×1 and `rgb` (R·N)×3 in ray-major order; `deltas` and `points`
/// are R×N constants.
pub fn composite_tape(
    tape: &mut Tape,
    density: Tensor,
    rgb: Tensor,
    deltas: Tensor,
    points: Tensor,
    background: [f64; 3],
) -> Result<CompositeTensors> {
    let (rays, n) = deltas.shape();
    let tau = tape.reshape(density, rays, n)?;
    let optical = tape.mul(tau, deltas)?;

    // exclusive prefix sum along each row as a product with a strictly upper-triangular mask
    let mut mask = vec![0.0; n * n];
    for j in 0..n {
        for i in (j + 1)..n {
            mask[j * n + i] = 1.0;
        }
    }
    let mask = tape.constant(n, n, mask);
    let before = tape.matmul(optical, mask)?;
    let neg_before = tape.neg(before);
    let trans = tape.exp(neg_before);

    let neg_optical = tape.neg(optical);
    let survive = tape.exp(neg_optical);
    let neg_survive = tape.neg(survive);
    let alpha = tape.add_scalar(neg_survive, 1.0);
    let weights = tape.mul(trans, alpha)?;

    let total = tape.sum(optical, Axis::Cols);
    let neg_total = tape.neg(total);
    let residual = tape.exp(neg_total);

    let mut color: Option<Tensor> = None;
    for k in 0..3 {
        let channel = tape.slice_cols(rgb, k, k + 1)?;
        let channel = tape.reshape(channel, rays, n)?;
        let weighted = tape.mul(weights, channel)?;
        let c = tape.sum(weighted, Axis::Cols);
        color = Some(match color {
            None => c,
            Some(prev) => tape.concat(prev, c)?,
        });
    }
    let bg = tape.constant(1, 3, background.to_vec());
    let bg = tape.matmul(residual, bg)?;
    let color = tape.add(color.expect("three channels"), bg)?;

    let weighted_points = tape.mul(weights, points)?;
    let depth = tape.sum(weighted_points, Axis::Cols);
    let ones = tape.constant(1, n, vec![1.0; n]);
    let depth_rows = tape.matmul(depth, ones)?;
    let diff = tape.sub(points, depth_rows)?;
    let sq = tape.mul(diff, diff)?;
    let weighted_sq = tape.mul(weights, sq)?;
    let depth_var = tape.sum(weighted_sq, Axis::Cols);

    Ok(CompositeTensors {
        color,
        depth,
        depth_var,
        weights,
        residual,
    })
}

/// Network inputs and quadrature geometry for a batch of rays, all with the same number
/// of segments.
#[derive(Clone, Debug)]
pub struct RayBatch {
    pub rays: usize,
    pub samples: usize,
    /// (rays·samples)×ipe_width
    pub ipe: Vec<f64>,
    /// (rays·samples)×dir_width
    pub dirs: Vec<f64>,
    /// rays×samples
    pub deltas: Vec<f64>,
    /// rays×samples
    pub points: Vec<f64>,
}

impl RayBatch {
    pub fn build(rays: &[Ray], segments: &[SegmentSet], enc: &EncodingConfig, depth_point: DepthPoint) -> Self {
        assert_eq!(rays.len(), segments.len());
        let samples = segments.first().map_or(0, |s| s.count());
        let (iw, dw) = (enc.ipe_width(), enc.dir_width());
        let rows = rays.len() * samples;
        let mut ipe = vec![0.0; rows * iw];
        let mut dirs = vec![0.0; rows * dw];
        let mut deltas = Vec::with_capacity(rows);
        let mut points = Vec::with_capacity(rows);
        let mut dir_enc = vec![0.0; dw];
        for (r, (ray, seg)) in rays.iter().zip(segments).enumerate() {
            assert_eq!(seg.count(), samples, "all rays in a batch need the same sample count");
            encode_direction_into(&ray.direction, enc.dir_bands, enc.append_raw_direction, &mut dir_enc);
            for (i, w) in seg.boundaries.windows(2).enumerate() {
                let row = r * samples + i;
                let fg = frustum_gaussian(ray, w[0], w[1]);
                integrated_pe_into(&fg, enc.ipe_bands, enc.attenuation, &mut ipe[row * iw..(row + 1) * iw]);
                dirs[row * dw..(row + 1) * dw].copy_from_slice(&dir_enc);
            }
            deltas.extend(seg.deltas());
            points.extend(depth_point.points(seg));
        }
        RayBatch {
            rays: rays.len(),
            samples,
            ipe,
            dirs,
            deltas,
            points,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderOptions {
    pub encoding: EncodingConfig,
    pub sampler: SamplerConfig,
    pub background: [f64; 3],
    pub depth_point: DepthPoint,
    pub seed: u64,
    /// Epoch index fed to the adaptive sampler.
    pub epoch: usize,
    pub chunk_rays: usize,
}

/// Color, depth and depth-variance maps in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedImage {
    pub width: usize,
    pub height: usize,
    /// H×W×3
    pub color: Vec<f64>,
    pub depth: Vec<f64>,
    pub depth_var: Vec<f64>,
}

/// Renders every pixel of a view without recording a tape.
///
/// `frame_id` keys the per-ray random streams. `guide_depth`, if given, steers the
/// depth-guided strategies; without it they fall back to uniform sampling per ray.
pub fn render_image(
    params: &FieldParams,
    intr: &Intrinsics,
    pose: &Pose,
    frame_id: usize,
    guide_depth: Option<&[f64]>,
    opts: &RenderOptions,
) -> Result<RenderedImage> {
    let pixels = intr.pixel_count();
    if let Some(d) = guide_depth {
        assert_eq!(d.len(), pixels, "guide depth map size");
    }
    let chunk = opts.chunk_rays.max(1);
    let starts: Vec<usize> = (0..pixels).step_by(chunk).collect();
    let parts: Vec<Result<Vec<RenderResult>>> = starts
        .par_iter()
        .map(|&start| {
            let end = (start + chunk).min(pixels);
            let rays: Vec<Ray> = (start..end)
                .map(|p| {
                    ray_for_pixel(
                        intr,
                        pose,
                        p / intr.width,
                        p % intr.width,
                        opts.sampler.global_near,
                        opts.sampler.global_far,
                    )
                })
                .collect();
            let segments: Vec<SegmentSet> = (start..end)
                .map(|p| {
                    let depth = guide_depth.map_or(0.0, |d| d[p]);
                    sample_segments(&opts.sampler, depth, opts.epoch, &mut ray_draws(opts.seed, frame_id, p, opts.epoch))
                })
                .collect();
            let batch = RayBatch::build(&rays, &segments, &opts.encoding, opts.depth_point);
            let out = field::forward_values(params, &batch.ipe, &batch.dirs, batch.rays * batch.samples)?;
            let n = batch.samples;
            Ok(segments
                .iter()
                .enumerate()
                .map(|(r, seg)| {
                    composite(
                        seg,
                        &out.density[r * n..(r + 1) * n],
                        &out.rgb[3 * r * n..3 * (r + 1) * n],
                        opts.background,
                        opts.depth_point,
                    )
                })
                .collect())
        })
        .collect();

    let mut color = Vec::with_capacity(3 * pixels);
    let mut depth = Vec::with_capacity(pixels);
    let mut depth_var = Vec::with_capacity(pixels);
    for part in parts {
        for r in part? {
            color.extend_from_slice(&r.color);
            depth.push(r.depth);
            depth_var.push(r.depth_var);
        }
    }
    Ok(RenderedImage {
        width: intr.width,
        height: intr.height,
        color,
        depth,
        depth_var,
    })
}
