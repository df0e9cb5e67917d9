//! Image and depth scores: PSNR, single-scale SSIM and absolute relative depth error.

use std::fmt::Write as _;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Metric(format!("inputs must be non-empty and equal in size, got {} and {}", a.len(), b.len())));
    }
    Ok(())
}

/// Peak signal-to-noise ratio for values in `[0, 1]`; identical inputs give `+inf`.
pub fn psnr(a: &[f64], b: &[f64]) -> Result<f64> {
    same_len(a, b)?;
    let mse = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { -10.0 * mse.log10() })
}

/// Normalized 1D Gaussian taps; the 2D window is their outer product.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size / 2) as f64;
    let raw: Vec<f64> = (0..size).map(|i| (-(i as f64 - half).powi(2) / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Separable filter over fully-contained windows: output is (h−k+1)×(w−k+1).
fn filter_valid(img: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (ow, oh) = (w - k + 1, h - k + 1);
    let mut horiz = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            horiz[r * ow + c] = taps.iter().enumerate().map(|(j, t)| t * img[r * w + c + j]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = taps.iter().enumerate().map(|(j, t)| t * horiz[(r + j) * ow + c]).sum();
        }
    }
    out
}

fn ssim_plane(x: &[f64], y: &[f64], w: usize, h: usize, taps: &[f64]) -> f64 {
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mx = filter_valid(x, w, h, taps);
    let my = filter_valid(y, w, h, taps);
    let mxx = filter_valid(&xx, w, h, taps);
    let myy = filter_valid(&yy, w, h, taps);
    let mxy = filter_valid(&xy, w, h, taps);
    let total: f64 = (0..mx.len())
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            let vx = mxx[i] - ux * ux;
            let vy = myy[i] - uy * uy;
            let vxy = mxy[i] - ux * uy;
            ((2.0 * ux * uy + c1) * (2.0 * vxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
        })
        .sum();
    total / mx.len() as f64
}

/// Mean SSIM over 11×11 Gaussian windows (σ = 1.5, data range 1) that fit inside the
/// image, averaged over channels. Images are H×W×`channels`, interleaved.
pub fn ssim(a: &[f64], b: &[f64], width: usize, height: usize, channels: usize) -> Result<f64> {
    same_len(a, b)?;
    if a.len() != width * height * channels {
        return Err(Error::Metric(format!("{} values do not form a {width}x{height}x{channels} image", a.len())));
    }
    if width < SSIM_WINDOW || height < SSIM_WINDOW {
        return Err(Error::Metric(format!("SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {width}x{height}")));
    }
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let plane = |img: &[f64], c: usize| -> Vec<f64> { img.iter().skip(c).step_by(channels).copied().collect() };
    let sum: f64 = (0..channels).map(|c| ssim_plane(&plane(a, c), &plane(b, c), width, height, &taps)).sum();
    Ok(sum / channels as f64)
}

/// Mean of `|pred − gt| / gt` over pixels with `gt > 0`. Not symmetric in its arguments.
pub fn abs_rel(pred: &[f64], gt: &[f64]) -> Result<f64> {
    same_len(pred, gt)?;
    let (sum, n) = pred
        .iter()
        .zip(gt)
        .filter(|(_, g)| **g > 0.0)
        .fold((0.0, 0usize), |(s, n), (p, g)| (s + (p - g).abs() / g, n + 1));
    if n == 0 {
        return Err(Error::Metric("no valid depth pixels".into()));
    }
    Ok(sum / n as f64)
}

/// JSON has no infinity: PSNR is written as the string `"inf"` when the images match.
mod psnr_repr {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("bad PSNR value {t:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameScores {
    pub frame: usize,
    #[serde(with = "psnr_repr")]
    pub psnr: f64,
    pub ssim: f64,
    pub abs_rel: f64,
    pub valid_pixels: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    #[serde(with = "psnr_repr")]
    pub psnr: f64,
    pub ssim: f64,
    pub abs_rel: f64,
    /// Filled in from external tools when available.
    pub lpips: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub frames: Vec<FrameScores>,
    pub mean: Scores,
}

/// Scores one rendered frame against ground truth.
pub fn score_frame(
    frame: usize,
    pred_rgb: &[f64],
    gt_rgb: &[f64],
    pred_depth: &[f64],
    gt_depth: &[f64],
    width: usize,
    height: usize,
) -> Result<FrameScores> {
    Ok(FrameScores {
        frame,
        psnr: psnr(pred_rgb, gt_rgb)?,
        ssim: ssim(pred_rgb, gt_rgb, width, height, 3)?,
        abs_rel: abs_rel(pred_depth, gt_depth)?,
        valid_pixels: gt_depth.iter().filter(|d| **d > 0.0).count(),
    })
}

impl EvalReport {
    pub fn from_frames(frames: Vec<FrameScores>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::Metric("no frames to report".into()));
        }
        let n = frames.len() as f64;
        let mean = Scores {
            psnr: frames.iter().map(|f| f.psnr).sum::<f64>() / n,
            ssim: frames.iter().map(|f| f.ssim).sum::<f64>() / n,
            abs_rel: frames.iter().map(|f| f.abs_rel).sum::<f64>() / n,
            lpips: None,
        };
        Ok(EvalReport { frames, mean })
    }

    pub fn to_table(&self) -> String {
        let mut rows: Vec<(String, Scores)> = self
            .frames
            .iter()
            .map(|f| {
                (
                    format!("frame {}", f.frame),
                    Scores {
                        psnr: f.psnr,
                        ssim: f.ssim,
                        abs_rel: f.abs_rel,
                        lpips: None,
                    },
                )
            })
            .collect();
        rows.push(("mean".into(), self.mean.clone()));
        score_table(&rows)
    }
}

fn fmt_psnr(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.2}")
    }
}

/// Aligned plain-text table with one labelled row per entry.
pub fn score_table(rows: &[(String, Scores)]) -> String {
    let label_width = rows.iter().map(|(l, _)| l.chars().count()).max().unwrap_or(0).max(5);
    let mut out = String::new();
    let _ = writeln!(out, "{:<label_width$}  {:>8}  {:>7}  {:>8}  {:>7}", "", "PSNR↑", "SSIM↑", "AbsRel↓", "LPIPS↓");
    for (label, s) in rows {
        let lpips = s.lpips.map_or("-".to_string(), |v| format!("{v:.3}"));
        let _ = writeln!(
            out,
            "{label:<label_width$}  {:>8}  {:>7.4}  {:>8.4}  {:>7}",
            fmt_psnr(s.psnr),
            s.ssim,
            s.abs_rel,
            lpips
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_reference_points() {
        let a = vec![0.5; 12];
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let b: Vec<f64> = a.iter().map(|v| v + 0.1).collect();
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        assert_eq!(psnr(&[0.0; 4], &[1.0; 4]).unwrap(), 0.0);
        assert!(psnr(&a, &a[..3]).is_err());
    }

    #[test]
    fn ssim_of_identical_images_is_exactly_one() {
        let img: Vec<f64> = (0..16 * 13 * 3).map(|i| ((i * 37) % 101) as f64 / 100.0).collect();
        assert_eq!(ssim(&img, &img, 16, 13, 3).unwrap(), 1.0);
    }

    #[test]
    fn ssim_of_constant_images_is_luminance_only() {
        let (a, b) = (0.2, 0.7);
        let x = vec![a; 12 * 12];
        let y = vec![b; 12 * 12];
        let c1 = 0.01f64.powi(2);
        let want = (2.0 * a * b + c1) / (a * a + b * b + c1);
        assert!((ssim(&x, &y, 12, 12, 1).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn ssim_rejects_small_images() {
        assert!(ssim(&[0.0; 100], &[0.0; 100], 10, 10, 1).is_err());
    }

    #[test]
    fn abs_rel_cases() {
        let gt = vec![2.0, 0.0, 4.0];
        assert_eq!(abs_rel(&gt, &gt).unwrap(), 0.0);
        let pred: Vec<f64> = gt.iter().map(|g| 1.1 * g).collect();
        assert!((abs_rel(&pred, &gt).unwrap() - 0.1).abs() < 1e-12);
        assert!(abs_rel(&[1.0], &[0.0]).is_err());
    }

    #[test]
    fn report_json_keeps_infinity() {
        let report = EvalReport::from_frames(vec![FrameScores {
            frame: 0,
            psnr: f64::INFINITY,
            ssim: 1.0,
            abs_rel: 0.0,
            valid_pixels: 4,
        }])
        .unwrap();
        let text = serde_json::to_string(&report).unwrap();
        assert!(text.contains("\"inf\""));
        let back: EvalReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, report);
        assert!(report.to_table().contains("inf"));
    }
}
