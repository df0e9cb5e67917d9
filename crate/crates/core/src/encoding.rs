//! Gaussian approximation of conical frustums and the integrated positional encoding
//! of those Gaussians, plus the frequency encoding of view directions.

use std::sync::Once;

use serde::{Deserialize, Serialize};

use crate::camera::{Ray, Vec3};

/// Segments shorter than this are widened to it.
pub const MIN_SEGMENT: f64 = 1e-9;

/// How the per-band attenuation exponent scales with the band index `l`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attenuation {
    /// `exp(-2^(2l-1) Σ_kk)`: the variance of `2^l x` is `4^l Σ_kk`, halved in the exponent.
    #[default]
    FrequencyLifted,
    /// `exp(-2^(l-1) Σ_kk)` with the world-space variance used unscaled.
    Linear,
}

impl Attenuation {
    fn exponent_scale(self, band: usize) -> f64 {
        match self {
            Attenuation::FrequencyLifted => 2f64.powi(2 * band as i32 - 1),
            Attenuation::Linear => 2f64.powi(band as i32 - 1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodingConfig {
    pub ipe_bands: usize,
    pub dir_bands: usize,
    pub attenuation: Attenuation,
    pub append_raw_direction: bool,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        EncodingConfig {
            ipe_bands: 16,
            dir_bands: 4,
            attenuation: Attenuation::FrequencyLifted,
            append_raw_direction: true,
        }
    }
}

impl EncodingConfig {
    pub fn ipe_width(&self) -> usize {
        6 * self.ipe_bands
    }

    pub fn dir_width(&self) -> usize {
        6 * self.dir_bands + if self.append_raw_direction { 3 } else { 0 }
    }
}

/// First two moments of a conical frustum segment `[t0, t1)` with cone radius `radius·t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrustumMoments {
    /// Mean distance along the ray.
    pub mean_t: f64,
    /// Variance along the ray.
    pub var_t: f64,
    /// Variance along each axis perpendicular to the ray.
    pub var_r: f64,
}

/// Closed-form moments of the uniform distribution inside the frustum (density ∝ t²
/// along the axis, uniform over each disk cross-section).
pub fn frustum_moments(t0: f64, t1: f64, radius: f64) -> FrustumMoments {
    let t1 = t1.max(t0 + MIN_SEGMENT);
    let mid = 0.5 * (t0 + t1);
    let half = 0.5 * (t1 - t0);
    let mid2 = mid * mid;
    let half2 = half * half;
    let half4 = half2 * half2;
    let denom = 3.0 * mid2 + half2;
    FrustumMoments {
        mean_t: mid + 2.0 * mid * half2 / denom,
        var_t: half2 / 3.0 - (4.0 / 15.0) * half4 * (12.0 * mid2 - half2) / (denom * denom),
        var_r: radius * radius * (mid2 / 4.0 + (5.0 / 12.0) * half2 - (4.0 / 15.0) * half4 / denom),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrustumGaussian {
    pub mu: Vec3,
    /// Diagonal of the world-space covariance.
    pub sigma_diag: Vec3,
    pub t0: f64,
    pub t1: f64,
}

pub fn frustum_gaussian(ray: &Ray, t0: f64, t1: f64) -> FrustumGaussian {
    let t1 = t1.max(t0 + MIN_SEGMENT);
    let m = frustum_moments(t0, t1, ray.radius);
    let d = ray.direction;
    let norm2 = d.norm_squared();
    let sigma_diag = d.map(|dk| {
        let outer = dk * dk;
        m.var_t * outer + m.var_r * (1.0 - outer / norm2)
    });
    FrustumGaussian {
        mu: ray.origin + d * m.mean_t,
        sigma_diag,
        t0,
        t1,
    }
}

/// Integrated positional encoding of `fg` with `bands` octaves.
///
/// Layout: all sine features (band-major, then x/y/z) followed by all cosine features.
pub fn integrated_pe(fg: &FrustumGaussian, bands: usize, attenuation: Attenuation) -> Vec<f64> {
    let mut out = vec![0.0; 6 * bands];
    integrated_pe_into(fg, bands, attenuation, &mut out);
    out
}

pub fn integrated_pe_into(fg: &FrustumGaussian, bands: usize, attenuation: Attenuation, out: &mut [f64]) {
    assert_eq!(out.len(), 6 * bands, "integrated_pe output width");
    let (sines, cosines) = out.split_at_mut(3 * bands);
    for l in 0..bands {
        let freq = 2f64.powi(l as i32);
        let scale = attenuation.exponent_scale(l);
        for k in 0..3 {
            let damp = (-scale * fg.sigma_diag[k]).exp();
            let (s, c) = (freq * fg.mu[k]).sin_cos();
            sines[3 * l + k] = s * damp;
            cosines[3 * l + k] = c * damp;
        }
    }
}

static NON_UNIT_WARNING: Once = Once::new();

/// `[d, sin(2^l d), cos(2^l d)]` with the raw direction optionally omitted.
pub fn encode_direction(d: &Vec3, bands: usize, append_raw: bool) -> Vec<f64> {
    let width = 6 * bands + if append_raw { 3 } else { 0 };
    let mut out = vec![0.0; width];
    encode_direction_into(d, bands, append_raw, &mut out);
    out
}

pub fn encode_direction_into(d: &Vec3, bands: usize, append_raw: bool, out: &mut [f64]) {
    let norm = d.norm();
    let d = if (norm - 1.0).abs() > 1e-9 {
        NON_UNIT_WARNING.call_once(|| log::warn!("encode_direction: non-unit direction (norm {norm}), normalizing"));
        d / norm
    } else {
        *d
    };
    let offset = if append_raw {
        out[..3].copy_from_slice(d.as_slice());
        3
    } else {
        0
    };
    let (sines, cosines) = out[offset..].split_at_mut(3 * bands);
    for l in 0..bands {
        let freq = 2f64.powi(l as i32);
        for k in 0..3 {
            let (s, c) = (freq * d[k]).sin_cos();
            sines[3 * l + k] = s;
            cosines[3 * l + k] = c;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn axis_ray(radius: f64) -> Ray {
        Ray {
            origin: Vec3::zeros(),
            direction: Vec3::z(),
            radius,
            pixel: (0, 0),
            near: 0.1,
            far: 10.0,
        }
    }

    #[test]
    fn axis_aligned_covariance_splits() {
        let fg = frustum_gaussian(&axis_ray(0.01), 2.0, 2.5);
        let m = frustum_moments(2.0, 2.5, 0.01);
        assert_eq!(fg.sigma_diag, Vec3::new(m.var_r, m.var_r, m.var_t));
        assert!((fg.mu.z - m.mean_t).abs() < 1e-15);
    }

    #[test]
    fn thin_segment_limit() {
        let m = frustum_moments(3.0, 3.0 + 1e-7, 0.01);
        assert!((m.mean_t - 3.0).abs() < 1e-6);
        assert!(m.var_t.abs() < 1e-14);
        // degenerate segments are widened, not rejected
        let fg = frustum_gaussian(&axis_ray(0.01), 2.0, 2.0);
        assert_eq!(fg.t1, 2.0 + MIN_SEGMENT);
        assert!(fg.sigma_diag.iter().all(|v| v.is_finite() && *v >= 0.0));
    }

    #[test]
    fn zero_variance_is_classic_positional_encoding() {
        let fg = FrustumGaussian {
            mu: Vec3::new(0.3, -1.2, 2.5),
            sigma_diag: Vec3::zeros(),
            t0: 0.0,
            t1: 1.0,
        };
        let enc = integrated_pe(&fg, 4, Attenuation::FrequencyLifted);
        for l in 0..4 {
            for k in 0..3 {
                let x = 2f64.powi(l) * fg.mu[k];
                assert_eq!(enc[3 * l as usize + k], x.sin());
                assert_eq!(enc[12 + 3 * l as usize + k], x.cos());
            }
        }
    }

    #[test]
    fn zero_mean_gives_pure_attenuation() {
        let fg = FrustumGaussian {
            mu: Vec3::zeros(),
            sigma_diag: Vec3::new(0.01, 0.02, 0.03),
            t0: 0.0,
            t1: 1.0,
        };
        let enc = integrated_pe(&fg, 3, Attenuation::FrequencyLifted);
        for l in 0..3 {
            for k in 0..3 {
                assert_eq!(enc[3 * l + k], 0.0);
                let want = (-(2f64.powi(2 * l as i32 - 1)) * fg.sigma_diag[k]).exp();
                assert!((enc[9 + 3 * l + k] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn fat_gaussians_lose_high_bands() {
        let fg = FrustumGaussian {
            mu: Vec3::new(0.7, 0.7, 0.7),
            sigma_diag: Vec3::new(10.0, 10.0, 10.0),
            t0: 0.0,
            t1: 1.0,
        };
        let enc = integrated_pe(&fg, 5, Attenuation::FrequencyLifted);
        assert!((-(2f64.powi(7)) * 10.0).exp() < 1e-300);
        for k in 0..3 {
            assert!(enc[12 + k].abs() < 1e-300);
            assert!(enc[15 + 12 + k].abs() < 1e-300);
        }
    }

    #[test]
    fn linear_attenuation_reading() {
        let fg = FrustumGaussian {
            mu: Vec3::zeros(),
            sigma_diag: Vec3::new(0.5, 0.5, 0.5),
            t0: 0.0,
            t1: 1.0,
        };
        let enc = integrated_pe(&fg, 3, Attenuation::Linear);
        assert!((enc[9 + 6] - (-2.0 * 0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn direction_encoding_layout() {
        let enc = encode_direction(&Vec3::z(), 1, true);
        let s1 = 1f64.sin();
        let c1 = 1f64.cos();
        assert_eq!(enc, vec![0.0, 0.0, 1.0, 0.0, 0.0, s1, 1.0, 1.0, c1]);
        assert_eq!(encode_direction(&Vec3::z(), 4, true).len(), 27);
        assert_eq!(encode_direction(&Vec3::z(), 4, false).len(), 24);
        assert_ne!(encode_direction(&Vec3::z(), 4, false), encode_direction(&-Vec3::z(), 4, false));
    }

    #[test]
    fn direction_encoding_normalizes() {
        let a = encode_direction(&Vec3::new(0.0, 0.0, 2.0), 2, true);
        let b = encode_direction(&Vec3::z(), 2, true);
        assert_eq!(a, b);
    }
}
