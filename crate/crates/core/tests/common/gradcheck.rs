use super::rel_err;
use depth_nerf::autodiff::{Axis, Tape, Tensor, UnaryKind};
use depth_nerf::camera::{Intrinsics, Pose, Vec3, ray_for_pixel};
use depth_nerf::encoding::EncodingConfig;
use depth_nerf::field::{self, FieldConfig, FieldParams};
use depth_nerf::render::{composite_tape, DepthPoint, RayBatch};
use depth_nerf::sampling::{ray_draws, sample_segments, SamplerConfig, Strategy};
use depth_nerf::training::{geometric_loss, photometric_loss, total_loss};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Input = (usize, usize, Vec<f64>);
pub type Build = dyn Fn(&mut Tape, &[Tensor]) -> Tensor;

fn random_values(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            // keep clear of the kinks of relu and abs at 0
            let v: f64 = rng.random_range(lo..hi);
            if v.abs() < 0.05 {
                v + 0.1
            } else {
                v
            }
        })
        .collect()
}

/// Scalar `Σ out ⊙ P` for a fixed random projection `P`.
fn project(tape: &mut Tape, out: Tensor, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p: Vec<f64> = (0..out.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let p = tape.constant(out.rows(), out.cols(), p);
    let prod = tape.mul(out, p).unwrap();
    tape.sum(prod, Axis::All)
}

fn eval(build: &Build, inputs: &[Input]) -> f64 {
    let mut tape = Tape::new();
    let ts: Vec<Tensor> = inputs.iter().map(|(r, c, v)| tape.leaf(*r, *c, v.clone())).collect();
    let out = build(&mut tape, &ts);
    let loss = project(&mut tape, out, 99);
    tape.scalar(loss)
}

/// Worst relative error between analytic and central-difference gradients over all inputs.
pub fn check(build: &Build, inputs: Vec<Input>) -> f64 {
    let mut tape = Tape::new();
    let ts: Vec<Tensor> = inputs.iter().map(|(r, c, v)| tape.leaf(*r, *c, v.clone())).collect();
    let out = build(&mut tape, &ts);
    let loss = project(&mut tape, out, 99);
    tape.backward(loss).unwrap();
    let h = 1e-6;
    let mut worst = 0.0f64;
    for (k, t) in ts.iter().enumerate() {
        let analytic = tape.grad(*t).map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec);
        let mut numeric = vec![0.0; t.len()];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let mut plus = inputs.clone();
            plus[k].2[i] += h;
            let mut minus = inputs.clone();
            minus[k].2[i] -= h;
            *slot = (eval(build, &plus) - eval(build, &minus)) / (2.0 * h);
        }
        worst = worst.max(rel_err(&analytic, &numeric, 1e-8));
    }
    worst
}

/// `(op name, worst relative error)` for every tape primitive.
pub fn primitive_errors() -> Vec<(String, f64)> {
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut m = |r: usize, c: usize| -> Input { (r, c, random_values(&mut rng, r * c, -1.5, 1.5)) };
    let (a34, b34, b45, bias) = (m(3, 4), m(3, 4), m(4, 5), m(1, 4));
    let (a32, col31) = (m(3, 2), m(3, 1));
    let mut positive = ChaCha8Rng::seed_from_u64(6);
    let pos: Input = (3, 4, (0..12).map(|_| positive.random_range(0.2..3.0)).collect());

    out.push(("matmul".to_string(), check(&|t, x| t.matmul(x[0], x[1]).unwrap(), vec![a34.clone(), b45])));
    out.push(("add".to_string(), check(&|t, x| t.add(x[0], x[1]).unwrap(), vec![a34.clone(), b34.clone()])));
    out.push(("sub".to_string(), check(&|t, x| t.sub(x[0], x[1]).unwrap(), vec![a34.clone(), b34.clone()])));
    out.push(("mul".to_string(), check(&|t, x| t.mul(x[0], x[1]).unwrap(), vec![a34.clone(), b34.clone()])));
    out.push(("mul same".to_string(), check(&|t, x| t.mul(x[0], x[0]).unwrap(), vec![a34.clone()])));
    out.push(("add_bias".to_string(), check(&|t, x| t.add_bias(x[0], x[1]).unwrap(), vec![a34.clone(), bias])));
    out.push(("scale".to_string(), check(&|t, x| t.scale(x[0], -2.5), vec![a34.clone()])));
    out.push(("add_scalar".to_string(), check(&|t, x| t.add_scalar(x[0], 0.7), vec![a34.clone()])));
    for kind in [
        UnaryKind::Exp,
        UnaryKind::Sin,
        UnaryKind::Cos,
        UnaryKind::Relu,
        UnaryKind::Sigmoid,
        UnaryKind::Softplus,
        UnaryKind::Neg,
        UnaryKind::Abs,
    ] {
        out.push((format!("{kind:?}"), check(&move |t, x| t.unary(kind, x[0]).unwrap(), vec![a34.clone()])));
    }
    out.push(("rsqrt".to_string(), check(&|t, x| t.rsqrt(x[0]).unwrap(), vec![pos])));
    for axis in [Axis::Rows, Axis::Cols, Axis::All] {
        out.push((format!("sum {axis:?}"), check(&move |t, x| t.sum(x[0], axis), vec![a34.clone()])));
        out.push((format!("mean {axis:?}"), check(&move |t, x| t.mean(x[0], axis), vec![a34.clone()])));
    }
    out.push(("concat".to_string(), check(&|t, x| t.concat(x[0], x[1]).unwrap(), vec![a32, col31])));
    out.push(("slice_cols".to_string(), check(&|t, x| t.slice_cols(x[0], 1, 3).unwrap(), vec![a34.clone()])));
    out.push(("reshape".to_string(), check(&|t, x| t.reshape(x[0], 2, 6).unwrap(), vec![a34.clone()])));
    out
}

fn small_field() -> (FieldConfig, EncodingConfig) {
    let enc = EncodingConfig {
        ipe_bands: 3,
        dir_bands: 1,
        ..EncodingConfig::default()
    };
    let cfg = FieldConfig {
        hidden_width: 7,
        color_width: 5,
        ..FieldConfig::from_encoding(&enc)
    };
    (cfg, enc)
}

pub fn field_error() -> f64 {
    let (cfg, _) = small_field();
    let params = FieldParams::init(cfg, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let rows = 5;
    let ipe = random_values(&mut rng, rows * cfg.ipe_width, -1.0, 1.0);
    let dir = random_values(&mut rng, rows * cfg.dir_width, -1.0, 1.0);
    let mut inputs: Vec<Input> = params.tensors.iter().map(|p| (p.rows, p.cols, p.values.clone())).collect();
    inputs.push((rows, cfg.ipe_width, ipe));
    inputs.push((rows, cfg.dir_width, dir));
    let n = params.tensors.len();
    let build = move |t: &mut Tape, x: &[Tensor]| {
        let out = field::forward(t, &cfg, &x[..n], x[n], x[n + 1]).unwrap();
        t.concat(out.density, out.rgb).unwrap()
    };
    check(&build, inputs)
}

/// Worst error over the color, depth and depth-variance outputs of compositing.
pub fn composite_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (rays, n) = (3, 5);
    let density: Vec<f64> = (0..rays * n).map(|_| rng.random_range(0.0..4.0)).collect();
    let rgb: Vec<f64> = (0..rays * n * 3).map(|_| rng.random_range(0.0..1.0)).collect();
    let mut deltas = Vec::new();
    let mut points = Vec::new();
    for _ in 0..rays {
        let mut t = 2.0;
        for _ in 0..n {
            let d: f64 = rng.random_range(0.05..0.6);
            deltas.push(d);
            points.push(t + 0.5 * d);
            t += d;
        }
    }
    let bg = [0.3, 0.1, 0.9];
    let mut worst = 0.0f64;
    for output in 0..3 {
        let (deltas, points) = (deltas.clone(), points.clone());
        let build = move |t: &mut Tape, x: &[Tensor]| {
            let dl = t.constant(rays, n, deltas.clone());
            let pt = t.constant(rays, n, points.clone());
            let c = composite_tape(t, x[0], x[1], dl, pt, bg).unwrap();
            [c.color, c.depth, c.depth_var][output]
        };
        worst = worst.max(check(&build, vec![(rays * n, 1, density.clone()), (rays * n, 3, rgb.clone())]));
    }
    worst
}

struct Toy {
    cfg: FieldConfig,
    params: FieldParams,
    batch: RayBatch,
    colors: Vec<f64>,
    depths: Vec<f64>,
    valid: Vec<f64>,
}

/// Two rays with four samples each through the full-width network.
fn toy() -> Toy {
    let enc = EncodingConfig::default();
    let cfg = FieldConfig::from_encoding(&enc);
    let params = FieldParams::init(cfg, 17);
    let intr = Intrinsics::from_fov(8, 8, 40.0).unwrap();
    let pose = Pose::look_at(Vec3::new(0.5, -3.5, 1.5), Vec3::zeros(), Vec3::z()).unwrap();
    let rays = vec![ray_for_pixel(&intr, &pose, 3, 4, 1.0, 7.0), ray_for_pixel(&intr, &pose, 6, 1, 1.0, 7.0)];
    let sampler = SamplerConfig {
        strategy: Strategy::Adaptive,
        n_samples: 4,
        ..SamplerConfig::default()
    };
    let depths = vec![3.6, 4.1];
    let segments: Vec<_> = depths
        .iter()
        .enumerate()
        .map(|(i, &d)| sample_segments(&sampler, d, 2, &mut ray_draws(4, 0, i, 2)))
        .collect();
    let batch = RayBatch::build(&rays, &segments, &enc, DepthPoint::Midpoint);
    Toy {
        cfg,
        params,
        batch,
        colors: vec![0.8, 0.2, 0.4, 0.1, 0.9, 0.3],
        depths,
        valid: vec![1.0, 1.0],
    }
}

/// Total training loss for the toy batch; `frozen_weight` replaces the variance weight
/// by fixed constants to mirror the detached objective.
fn toy_loss(t: &mut Tape, toy: &Toy, leaves: &[Tensor], detached: bool, frozen_weight: Option<&[f64]>) -> (Tensor, Tensor) {
    let (r, n) = (toy.batch.rays, toy.batch.samples);
    let ipe = t.constant(r * n, toy.cfg.ipe_width, toy.batch.ipe.clone());
    let dirs = t.constant(r * n, toy.cfg.dir_width, toy.batch.dirs.clone());
    let out = field::forward(t, &toy.cfg, leaves, ipe, dirs).unwrap();
    let dl = t.constant(r, n, toy.batch.deltas.clone());
    let pt = t.constant(r, n, toy.batch.points.clone());
    let c = composite_tape(t, out.density, out.rgb, dl, pt, [0.0; 3]).unwrap();
    let target_rgb = t.constant(r, 3, toy.colors.clone());
    let target_d = t.constant(r, 1, toy.depths.clone());
    let lp = photometric_loss(t, c.color, target_rgb).unwrap();
    let lg = match frozen_weight {
        Some(w) => {
            let w = t.constant(r, 1, w.to_vec());
            let diff = t.sub(c.depth, target_d).unwrap();
            let abs = t.abs(diff);
            let weighted = t.mul(abs, w).unwrap();
            t.sum(weighted, Axis::All)
        }
        None => {
            let mask = t.constant(r, 1, toy.valid.clone());
            geometric_loss(t, c.depth, c.depth_var, target_d, mask, 1e-6, detached).unwrap()
        }
    };
    (total_loss(t, lg, lp, 100.0).unwrap(), c.depth_var)
}

fn toy_value(toy: &Toy, values: &[Vec<f64>], frozen: Option<&[f64]>) -> f64 {
    let mut t = Tape::new();
    let leaves: Vec<Tensor> = toy.params.tensors.iter().zip(values).map(|(p, v)| t.leaf(p.rows, p.cols, v.clone())).collect();
    let (loss, _) = toy_loss(&mut t, toy, &leaves, false, frozen);
    t.scalar(loss)
}

/// Worst relative error of the full training-loss gradient on two rays with four
/// samples each; `detached` compares against the objective with a frozen variance weight.
pub fn end_to_end(detached: bool) -> f64 {
    let toy = toy();
    let mut tape = Tape::new();
    let leaves = toy.params.register(&mut tape);
    let (loss, var) = toy_loss(&mut tape, &toy, &leaves, detached, None);
    tape.backward(loss).unwrap();
    let frozen: Option<Vec<f64>> = detached.then(|| tape.value(var).iter().map(|v| 1.0 / (v + 1e-6).sqrt()).collect());
    let base: Vec<Vec<f64>> = toy.params.tensors.iter().map(|p| p.values.clone()).collect();
    let grads: Vec<Vec<f64>> = leaves.iter().map(|&l| tape.grad(l).map_or_else(|| vec![0.0; l.len()], <[f64]>::to_vec)).collect();

    let h = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    // random coordinates in every tensor
    for (k, g) in grads.iter().enumerate() {
        for _ in 0..12 {
            let i = rng.random_range(0..g.len());
            let mut plus = base.clone();
            plus[k][i] += h;
            let mut minus = base.clone();
            minus[k][i] -= h;
            analytic.push(g[i]);
            numeric.push((toy_value(&toy, &plus, frozen.as_deref()) - toy_value(&toy, &minus, frozen.as_deref())) / (2.0 * h));
        }
    }
    let coord_err = rel_err(&analytic, &numeric, 1e-8);
    // directional derivatives along random dense directions
    let mut worst = coord_err;
    for _ in 0..3 {
        let dir: Vec<Vec<f64>> = base.iter().map(|b| (0..b.len()).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let along = |s: f64| -> Vec<Vec<f64>> { base.iter().zip(&dir).map(|(b, d)| b.iter().zip(d).map(|(x, y)| x + s * y).collect()).collect() };
        let fd = (toy_value(&toy, &along(h), frozen.as_deref()) - toy_value(&toy, &along(-h), frozen.as_deref())) / (2.0 * h);
        let an: f64 = grads.iter().zip(&dir).flat_map(|(g, d)| g.iter().zip(d).map(|(x, y)| x * y)).sum();
        worst = worst.max((an - fd).abs() / fd.abs().max(1e-8));
    }
    worst
}
