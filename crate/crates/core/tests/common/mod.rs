//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

pub mod gradcheck;

use depth_nerf::camera::Vec3;
use depth_nerf::dataset::{Scene, Shape};
use rand::Rng;

/// Two-sided Kolmogorov–Smirnov p-value for samples against Uniform(0, 1).
pub fn ks_uniform_pvalue(samples: &[f64]) -> f64 {
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let d = x
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let lo = v - i as f64 / n;
            let hi = (i as f64 + 1.0) / n - v;
            lo.max(hi)
        })
        .fold(0.0, f64::max);
    let sqrt_n = n.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    kolmogorov_q(lambda)
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..200 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Monte-Carlo moments of a point drawn uniformly from the conical frustum
/// `t ∈ [t0, t1]`, radius `radius·t`, around the +z axis: (mean t, var t, var x).
pub fn mc_frustum_moments<R: Rng>(t0: f64, t1: f64, radius: f64, n: usize, rng: &mut R) -> (f64, f64, f64) {
    let (a, b) = (t0.powi(3), t1.powi(3));
    let (mut st, mut stt, mut sx, mut sxx) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..n {
        // volume element ∝ t² dt, uniform over each disk
        let t = (a + rng.random::<f64>() * (b - a)).cbrt();
        let rho = radius * t * rng.random::<f64>().sqrt();
        let phi = std::f64::consts::TAU * rng.random::<f64>();
        let x = rho * phi.cos();
        st += t;
        stt += t * t;
        sx += x;
        sxx += x * x;
    }
    let n = n as f64;
    let mean_t = st / n;
    let mean_x = sx / n;
    (mean_t, stt / n - mean_t * mean_t, sxx / n - mean_x * mean_x)
}

/// SSIM evaluated window by window with explicit 2D Gaussian weights and two-pass
/// moments. Single channel, row-major.
pub fn reference_ssim(a: &[f64], b: &[f64], w: usize, h: usize) -> f64 {
    const K: usize = 11;
    let sigma = 1.5;
    let mut weights = [[0.0; K]; K];
    let mut total = 0.0;
    for (i, row) in weights.iter_mut().enumerate() {
        for (j, wt) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            *wt = (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp();
            total += *wt;
        }
    }
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut acc = 0.0;
    let mut count = 0;
    for r0 in 0..=h - K {
        for q0 in 0..=w - K {
            let at = |img: &[f64], i: usize, j: usize| img[(r0 + i) * w + q0 + j];
            let (mut mx, mut my) = (0.0, 0.0);
            for i in 0..K {
                for j in 0..K {
                    mx += weights[i][j] / total * at(a, i, j);
                    my += weights[i][j] / total * at(b, i, j);
                }
            }
            let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
            for i in 0..K {
                for j in 0..K {
                    let wt = weights[i][j] / total;
                    let dx = at(a, i, j) - mx;
                    let dy = at(b, i, j) - my;
                    vx += wt * dx * dx;
                    vy += wt * dy * dy;
                    cxy += wt * dx * dy;
                }
            }
            acc += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    acc / count as f64
}

/// Textbook Adam on a flat vector.
pub struct ReferenceAdam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl ReferenceAdam {
    pub fn new(n: usize) -> Self {
        ReferenceAdam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, x: &mut [f64], g: &[f64], lr: f64) {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        self.t += 1;
        for i in 0..x.len() {
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g[i];
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g[i] * g[i];
            let mh = self.m[i] / (1.0 - b1.powi(self.t));
            let vh = self.v[i] / (1.0 - b2.powi(self.t));
            x[i] -= lr * mh / (vh.sqrt() + eps);
        }
    }
}

/// Which side of the surface of `shape` a point lies on (`true` = inside or behind).
fn occupied(shape: &Shape, p: &Vec3) -> bool {
    match *shape {
        Shape::Sphere { center, radius } => (p - center).norm() < radius,
        Shape::Cuboid { min, max } => (0..3).all(|k| p[k] > min[k] && p[k] < max[k]),
        Shape::Plane { point, normal, .. } => (p - point).dot(&normal) < 0.0,
    }
}

fn within_patch(shape: &Shape, p: &Vec3) -> bool {
    match *shape {
        Shape::Plane { point, normal, extent } => {
            let n = normal.normalize();
            let rel = p - point;
            let in_plane = rel - n * rel.dot(&n);
            // the patch is a square; any in-plane axis pair works for a bound check
            let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
            let u = n.cross(&helper).normalize();
            let v = n.cross(&u);
            in_plane.dot(&u).abs() <= extent && in_plane.dot(&v).abs() <= extent
        }
        _ => true,
    }
}

/// First surface crossing along a ray found by fixed-step marching; 0 for a miss.
pub fn ray_march_depth(scene: &Scene, origin: &Vec3, dir: &Vec3, step: f64, t_max: f64) -> f64 {
    let mut best = f64::INFINITY;
    for prim in &scene.primitives {
        let mut start = occupied(&prim.shape, origin);
        let mut t = 0.0;
        while t < t_max.min(best) {
            let next = t + step;
            let p = origin + dir * next;
            if occupied(&prim.shape, &p) != start {
                // locate the crossing inside the step so patch edges are judged at the surface
                let (mut lo, mut hi) = (t, next);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if occupied(&prim.shape, &(origin + dir * mid)) != start {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                if within_patch(&prim.shape, &(origin + dir * hi)) {
                    best = best.min(next);
                    break;
                }
                start = !start;
            }
            t = next;
        }
    }
    if best.is_finite() {
        best
    } else {
        0.0
    }
}

const GK_NODES: [f64; 8] = [
    0.991455371120812639,
    0.949107912342758525,
    0.864864423359769073,
    0.741531185599394440,
    0.586087235467691130,
    0.405845151377397167,
    0.207784955007898468,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022935322010529225,
    0.063092092629978553,
    0.104790010322250184,
    0.140653259715525919,
    0.169004726639267903,
    0.190350578064785410,
    0.204432940075298892,
    0.209482141084727828,
];
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129484966168869693,
    0.279705391489276668,
    0.381830050505118945,
    0.417959183673469388,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = GK_WEIGHTS[7] * fc;
    let mut gauss = GAUSS_WEIGHTS[3] * fc;
    for i in 0..7 {
        let x = h * GK_NODES[i];
        let s = f(c - x) + f(c + x);
        kronrod += GK_WEIGHTS[i] * s;
        if i % 2 == 1 {
            gauss += GAUSS_WEIGHTS[i / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod (7/15) integration to absolute tolerance `tol`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let (value, err) = gk15(f, a, b);
    if err <= tol || (b - a) < 1e-12 {
        value
    } else {
        let m = 0.5 * (a + b);
        integrate(f, a, m, tol / 2.0) + integrate(f, m, b, tol / 2.0)
    }
}

/// Norm-wise relative difference `‖a − b‖ / max(‖b‖, floor)`.
pub fn rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm.max(floor)
}
