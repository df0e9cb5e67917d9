//! Dataset directories: `manifest.json`, `rgb/####.png`, `depth/####.pfm` and, for noisy
//! captures, `depth_clean/####.pfm`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Dataset, RgbdFrame, Split};
use crate::camera::{Intrinsics, Pose};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
const MANIFEST_VERSION: u32 = 1;

/// Writes a single-channel little-endian PFM (bottom row first, as the format requires).
pub fn write_pfm(path: &Path, width: usize, height: usize, values: &[f64]) -> Result<()> {
    assert_eq!(values.len(), width * height, "pfm size");
    let mut buf = Vec::with_capacity(32 + 4 * values.len());
    write!(buf, "Pf\n{width} {height}\n-1.0\n")?;
    for row in (0..height).rev() {
        for v in &values[row * width..(row + 1) * width] {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| Error::data(path, format!("cannot write: {e}")))
}

/// Reads a single-channel PFM of either endianness into row-major order, top row first.
pub fn read_pfm(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let bytes = fs::read(path).map_err(|e| Error::data(path, format!("cannot read: {e}")))?;
    let bad = |msg: &str| Error::data(path, format!("malformed PFM: {msg}"));
    let mut tokens = Vec::with_capacity(4);
    let mut pos = 0;
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        tokens.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-text header"))?);
    }
    // exactly one whitespace byte separates the header from the data
    pos += 1;
    match tokens[0] {
        "Pf" => {}
        "PF" => return Err(bad("three-channel maps are not depth maps")),
        other => return Err(bad(&format!("unknown magic {other:?}"))),
    }
    let width: usize = tokens[1].parse().map_err(|_| bad("bad width"))?;
    let height: usize = tokens[2].parse().map_err(|_| bad("bad height"))?;
    let scale: f64 = tokens[3].parse().map_err(|_| bad("bad scale"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(bad("scale must be non-zero"));
    }
    let little = scale < 0.0;
    let body = bytes.get(pos..).unwrap_or(&[]);
    if body.len() != 4 * width * height {
        return Err(bad(&format!("expected {} data bytes, found {}", 4 * width * height, body.len())));
    }
    let mut out = vec![0.0; width * height];
    for (i, chunk) in body.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let (file_row, col) = (i / width, i % width);
        out[(height - 1 - file_row) * width + col] = v as f64;
    }
    Ok((width, height, out))
}

fn quantize(c: f64) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// 8-bit RGB PNG from an H×W×3 image in `[0, 1]`.
pub fn write_png(path: &Path, width: usize, height: usize, rgb: &[f64]) -> Result<()> {
    assert_eq!(rgb.len(), 3 * width * height, "png size");
    let data: Vec<u8> = rgb.iter().map(|&c| quantize(c)).collect();
    image::save_buffer(path, &data, width as u32, height as u32, image::ColorType::Rgb8)
        .map_err(|e| Error::data(path, format!("cannot write PNG: {e}")))
}

pub fn read_png(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let img = image::open(path).map_err(|e| Error::data(path, format!("cannot read image: {e}")))?.to_rgb8();
    let (w, h) = img.dimensions();
    Ok((w as usize, h as usize, img.into_raw().into_iter().map(|b| b as f64 / 255.0).collect()))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameEntry {
    color_path: String,
    depth_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    clean_depth_path: Option<String>,
    #[serde(default)]
    split: Split,
    /// Camera-to-world, row-major.
    transform_matrix: [[f64; 4]; 4],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    version: u32,
    intrinsics: Intrinsics,
    background: [f64; 3],
    near: f64,
    far: f64,
    frames: Vec<FrameEntry>,
}

pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    ds.validate()?;
    let (w, h) = (ds.intrinsics.width, ds.intrinsics.height);
    for sub in ["rgb", "depth"] {
        fs::create_dir_all(dir.join(sub)).map_err(|e| Error::data(dir.join(sub), format!("cannot create: {e}")))?;
    }
    let mut entries = Vec::with_capacity(ds.frames.len());
    for (i, f) in ds.frames.iter().enumerate() {
        let color_path = format!("rgb/{i:04}.png");
        let depth_path = format!("depth/{i:04}.pfm");
        write_png(&dir.join(&color_path), w, h, &f.color)?;
        write_pfm(&dir.join(&depth_path), w, h, &f.depth)?;
        let clean_depth_path = match &f.clean_depth {
            Some(clean) => {
                let p = format!("depth_clean/{i:04}.pfm");
                fs::create_dir_all(dir.join("depth_clean"))?;
                write_pfm(&dir.join(&p), w, h, clean)?;
                Some(p)
            }
            None => None,
        };
        entries.push(FrameEntry {
            color_path,
            depth_path,
            clean_depth_path,
            split: f.split,
            transform_matrix: f.pose.to_matrix(),
        });
    }
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        intrinsics: ds.intrinsics,
        background: ds.background,
        near: ds.near,
        far: ds.far,
        frames: entries,
    };
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
        .map_err(|e| Error::data(&path, format!("cannot write: {e}")))
}

fn load_depth(dir: &Path, rel: &str, w: usize, h: usize) -> Result<Vec<f64>> {
    let path = dir.join(rel);
    let (pw, ph, values) = read_pfm(&path)?;
    if (pw, ph) != (w, h) {
        return Err(Error::data(path, format!("depth map is {pw}x{ph}, manifest says {w}x{h}")));
    }
    Ok(values)
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_path: PathBuf = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::data(&manifest_path, format!("cannot read manifest: {e}")))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::data(&manifest_path, format!("invalid manifest: {e}")))?;
    if m.version != MANIFEST_VERSION {
        return Err(Error::data(&manifest_path, format!("unsupported manifest version {}", m.version)));
    }
    if m.frames.is_empty() {
        return Err(Error::data(&manifest_path, "manifest lists no frames"));
    }
    let intr = Intrinsics::new(m.intrinsics.fx, m.intrinsics.fy, m.intrinsics.cx, m.intrinsics.cy, m.intrinsics.width, m.intrinsics.height)
        .map_err(|e| Error::data(&manifest_path, e.to_string()))?;
    let (w, h) = (intr.width, intr.height);
    let mut frames = Vec::with_capacity(m.frames.len());
    for entry in &m.frames {
        let color_path = dir.join(&entry.color_path);
        let (cw, ch, color) = read_png(&color_path)?;
        if (cw, ch) != (w, h) {
            return Err(Error::data(color_path, format!("image is {cw}x{ch}, manifest says {w}x{h}")));
        }
        let depth = load_depth(dir, &entry.depth_path, w, h)?;
        let clean_depth = entry.clean_depth_path.as_deref().map(|p| load_depth(dir, p, w, h)).transpose()?;
        let pose = Pose::from_matrix(&entry.transform_matrix).map_err(|e| Error::data(&manifest_path, e.to_string()))?;
        frames.push(RgbdFrame {
            color,
            depth,
            clean_depth,
            pose,
            split: entry.split,
        });
    }
    let ds = Dataset {
        intrinsics: intr,
        background: m.background,
        near: m.near,
        far: m.far,
        frames,
    };
    ds.validate().map_err(|e| Error::data(&manifest_path, e.to_string()))?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate, GenerateConfig};

    #[test]
    fn pfm_round_trip_and_orientation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.pfm");
        let values: Vec<f64> = (0..12).map(|i| i as f64 * 0.25).collect();
        write_pfm(&p, 4, 3, &values).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert!(bytes.starts_with(b"Pf\n4 3\n-1.0\n"));
        // first stored row is the bottom image row
        let first = f32::from_le_bytes(bytes[12..16].try_into().unwrap());
        assert_eq!(first, 2.0);
        assert_eq!(read_pfm(&p).unwrap(), (4, 3, values));
    }

    #[test]
    fn big_endian_pfm_is_read() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("be.pfm");
        let mut bytes = b"Pf\n2 1\n1.0\n".to_vec();
        bytes.extend_from_slice(&1.5f32.to_be_bytes());
        bytes.extend_from_slice(&(-2.0f32).to_be_bytes());
        fs::write(&p, bytes).unwrap();
        assert_eq!(read_pfm(&p).unwrap().2, vec![1.5, -2.0]);
    }

    #[test]
    fn truncated_pfm_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.pfm");
        fs::write(&p, b"Pf\n2 2\n-1.0\n\0\0\0\0").unwrap();
        let err = read_pfm(&p).unwrap_err().to_string();
        assert!(err.contains("t.pfm"), "{err}");
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate(&GenerateConfig {
            width: 16,
            height: 12,
            views: 2,
            test_views: 1,
            noise_sigma: 0.01,
            ..GenerateConfig::default()
        })
        .unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back.intrinsics, ds.intrinsics);
        assert_eq!(back.frames.len(), 3);
        for (a, b) in ds.frames.iter().zip(&back.frames) {
            assert_eq!(a.pose, b.pose);
            assert_eq!(a.split, b.split);
            assert!(a.depth.iter().zip(&b.depth).all(|(x, y)| (x - y).abs() < 1e-4));
            assert!(a.color.iter().zip(&b.color).all(|(x, y)| (x - y).abs() < 1.0 / 255.0));
            assert_eq!(a.clean_depth.is_some(), b.clean_depth.is_some());
        }
    }

    #[test]
    fn load_errors_name_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_dataset(dir.path()).unwrap_err().to_string();
        assert!(err.contains(MANIFEST_FILE), "{err}");

        let ds = generate(&GenerateConfig {
            width: 8,
            height: 8,
            views: 1,
            ..GenerateConfig::default()
        })
        .unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        fs::remove_file(dir.path().join("rgb/0000.png")).unwrap();
        let err = load_dataset(dir.path()).unwrap_err().to_string();
        assert!(err.contains("0000.png"), "{err}");
    }
}
