//! Segment boundaries along a ray: the uniform stratified baseline and the three
//! depth-guided strategies (local stratified, local Gaussian, adaptive Gaussian).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest allowed distance between consecutive boundaries, in meters.
pub const MIN_GAP: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Uniform,
    StratifiedLocal,
    GaussianLocal,
    Adaptive,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Uniform,
        Strategy::StratifiedLocal,
        Strategy::GaussianLocal,
        Strategy::Adaptive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Uniform => "uniform",
            Strategy::StratifiedLocal => "stratified",
            Strategy::GaussianLocal => "gaussian",
            Strategy::Adaptive => "adaptive",
        }
    }

    pub fn uses_depth(self) -> bool {
        self != Strategy::Uniform
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Strategy::Uniform),
            "stratified" | "stratified_local" => Ok(Strategy::StratifiedLocal),
            "gaussian" | "gaussian_local" => Ok(Strategy::GaussianLocal),
            "adaptive" => Ok(Strategy::Adaptive),
            other => Err(Error::Config(format!(
                "unknown sampler `{other}` (expected adaptive, gaussian, stratified or uniform)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub strategy: Strategy,
    pub n_samples: usize,
    pub alpha_near: f64,
    pub alpha_far: f64,
    pub varsigma: f64,
    pub lambda_r: f64,
    pub lambda_m: f64,
    pub global_near: f64,
    pub global_far: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            strategy: Strategy::Adaptive,
            n_samples: 16,
            alpha_near: 0.5,
            alpha_far: 0.5,
            varsigma: 0.3,
            lambda_r: 0.09,
            lambda_m: 0.1,
            global_near: 1.0,
            global_far: 7.0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let problem = if self.n_samples < 2 {
            Some("n_samples must be at least 2")
        } else if !(self.alpha_near > 0.0 && self.alpha_far > 0.0) {
            Some("alpha_near and alpha_far must be positive")
        } else if !(self.varsigma > 0.0) {
            Some("varsigma must be positive")
        } else if !(self.lambda_m > 0.0) {
            Some("lambda_m must be positive")
        } else if !(self.lambda_r >= 0.0) {
            Some("lambda_r must be non-negative")
        } else if !(self.global_near > 0.0 && self.global_near < self.global_far) {
            Some("global bounds must satisfy 0 < global_near < global_far")
        } else if (self.n_samples as f64) * MIN_GAP >= self.global_far - self.global_near {
            Some("ray interval too short for the requested sample count")
        } else {
            None
        };
        match problem {
            Some(p) => Err(Error::Config(format!("sampler: {p}"))),
            None => Ok(()),
        }
    }
}

/// Source of the random variates consumed by the samplers.
pub trait Draws {
    /// Uniform on `[0, 1)`.
    fn uniform(&mut self) -> f64;
    fn standard_normal(&mut self) -> f64;
}

/// [`Draws`] backed by any `rand` generator.
pub struct RandomDraws<R>(pub R);

impl<R: Rng> Draws for RandomDraws<R> {
    fn uniform(&mut self) -> f64 {
        self.0.random::<f64>()
    }

    fn standard_normal(&mut self) -> f64 {
        self.0.sample(StandardNormal)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator keyed by `(seed, keys...)`; used to give every
/// (frame, pixel, epoch) its own stream so results do not depend on batching.
pub fn stream_rng(seed: u64, keys: &[u64]) -> ChaCha8Rng {
    let mut state = splitmix64(seed);
    for &k in keys {
        state = splitmix64(state ^ splitmix64(k));
    }
    let mut bytes = [0u8; 32];
    for (i, chunk) in bytes.chunks_exact_mut(8).enumerate() {
        chunk.copy_from_slice(&splitmix64(state.wrapping_add(i as u64)).to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}

/// Per-ray stream for a given pixel of a given frame at a given epoch.
pub fn ray_draws(seed: u64, frame: usize, pixel: usize, epoch: usize) -> RandomDraws<ChaCha8Rng> {
    RandomDraws(stream_rng(seed, &[frame as u64, pixel as u64, epoch as u64]))
}

/// Sorted segment boundaries `t_0 < … < t_N` of one ray.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentSet {
    pub boundaries: Vec<f64>,
    /// The requested depth-guided strategy could not run (missing depth) and the uniform
    /// sampler was used instead.
    pub fallback: bool,
}

impl SegmentSet {
    pub fn count(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn deltas(&self) -> impl Iterator<Item = f64> + '_ {
        self.boundaries.windows(2).map(|w| w[1] - w[0])
    }

    pub fn midpoints(&self) -> impl Iterator<Item = f64> + '_ {
        self.boundaries.windows(2).map(|w| 0.5 * (w[0] + w[1]))
    }

    pub fn is_valid(&self, lo: f64, hi: f64) -> bool {
        self.boundaries.windows(2).all(|w| w[1] - w[0] >= MIN_GAP * (1.0 - 1e-9))
            && self.boundaries.iter().all(|&t| t >= lo && t <= hi)
    }
}

/// A usable depth measurement: finite and strictly positive.
pub fn valid_depth(depth: f64) -> bool {
    depth.is_finite() && depth > 0.0
}

/// Sorts, clamps into `[lo, hi]` and enforces [`MIN_GAP`] by nudging forward, then
/// backward from `hi` if the forward pass overshot.
fn finalize(mut b: Vec<f64>, lo: f64, hi: f64) -> Vec<f64> {
    b.sort_by(f64::total_cmp);
    for t in b.iter_mut() {
        *t = t.clamp(lo, hi);
    }
    for i in 1..b.len() {
        if b[i] < b[i - 1] + MIN_GAP {
            b[i] = b[i - 1] + MIN_GAP;
        }
    }
    let last = b.len() - 1;
    if b[last] > hi {
        b[last] = hi;
        for i in (0..last).rev() {
            if b[i + 1] - b[i] < MIN_GAP {
                b[i] = (b[i + 1] - MIN_GAP).max(lo);
            }
        }
    }
    b
}

fn stratified(n_boundaries: usize, lo: f64, hi: f64, draws: &mut dyn Draws) -> Vec<f64> {
    let width = (hi - lo) / n_boundaries as f64;
    let raw = (0..n_boundaries).map(|i| lo + (i as f64 + draws.uniform()) * width).collect();
    finalize(raw, lo, hi)
}

/// One uniform draw in each of `N + 1` equal bins spanning the global bounds.
pub fn sample_uniform(cfg: &SamplerConfig, draws: &mut dyn Draws) -> SegmentSet {
    SegmentSet {
        boundaries: stratified(cfg.n_samples + 1, cfg.global_near, cfg.global_far, draws),
        fallback: false,
    }
}

fn fallback(cfg: &SamplerConfig, draws: &mut dyn Draws) -> SegmentSet {
    SegmentSet {
        fallback: true,
        ..sample_uniform(cfg, draws)
    }
}

/// Stratified bins restricted to `[D − α_n, D + α_f]` (clipped to the global bounds).
pub fn sample_stratified_local(cfg: &SamplerConfig, depth: f64, draws: &mut dyn Draws) -> SegmentSet {
    if !valid_depth(depth) {
        return fallback(cfg, draws);
    }
    let mut lo = (depth - cfg.alpha_near).max(cfg.global_near);
    let mut hi = (depth + cfg.alpha_far).min(cfg.global_far);
    let needed = (cfg.n_samples + 1) as f64 * MIN_GAP;
    if hi - lo < needed {
        // depth far outside the global bounds; keep a minimal window at the nearest edge
        if lo >= cfg.global_far - needed {
            lo = cfg.global_far - needed;
            hi = cfg.global_far;
        } else {
            lo = cfg.global_near;
            hi = cfg.global_near + needed;
        }
    }
    SegmentSet {
        boundaries: stratified(cfg.n_samples + 1, lo, hi, draws),
        fallback: false,
    }
}

/// `N + 1` draws from `Normal(D, spread²)`, sorted and made strictly increasing.
pub fn sample_gaussian_local(cfg: &SamplerConfig, depth: f64, spread: f64, draws: &mut dyn Draws) -> SegmentSet {
    if !valid_depth(depth) || !(spread > 0.0) {
        return fallback(cfg, draws);
    }
    let raw = (0..=cfg.n_samples).map(|_| depth + spread * draws.standard_normal()).collect();
    SegmentSet {
        boundaries: finalize(raw, cfg.global_near, cfg.global_far),
        fallback: false,
    }
}

/// Epoch- and depth-dependent spread `D/4 · (exp(−λ_r·epoch) + λ_m)`.
pub fn adaptive_spread(depth: f64, epoch: usize, lambda_r: f64, lambda_m: f64) -> f64 {
    depth / 4.0 * ((-lambda_r * epoch as f64).exp() + lambda_m)
}

pub fn sample_adaptive(cfg: &SamplerConfig, depth: f64, epoch: usize, draws: &mut dyn Draws) -> SegmentSet {
    if !valid_depth(depth) {
        return fallback(cfg, draws);
    }
    let spread = adaptive_spread(depth, epoch, cfg.lambda_r, cfg.lambda_m);
    sample_gaussian_local(cfg, depth, spread, draws)
}

/// Dispatches on `cfg.strategy`. `depth` is ignored by the uniform strategy.
pub fn sample_segments(cfg: &SamplerConfig, depth: f64, epoch: usize, draws: &mut dyn Draws) -> SegmentSet {
    match cfg.strategy {
        Strategy::Uniform => sample_uniform(cfg, draws),
        Strategy::StratifiedLocal => sample_stratified_local(cfg, depth, draws),
        Strategy::GaussianLocal => sample_gaussian_local(cfg, depth, cfg.varsigma, draws),
        Strategy::Adaptive => sample_adaptive(cfg, depth, epoch, draws),
    }
}
