//! Renders a synthetic RGB-D scene and writes it to disk.
//!
//! cargo run --release --example generate_dataset -- [scene] [out_dir] [noise_sigma]

use std::path::PathBuf;

use depth_nerf::dataset::{generate, load_dataset, save_dataset, GenerateConfig};

fn main() -> depth_nerf::Result<()> {
    let mut args = std::env::args().skip(1);
    let scene = args.next().unwrap_or_else(|| "cube".into());
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join(format!("{scene}_rgbd")));
    let noise_sigma = args.next().map(|s| s.parse().expect("noise sigma")).unwrap_or(0.0);

    let cfg = GenerateConfig {
        scene,
        views: 8,
        test_views: 2,
        noise_sigma,
        ..GenerateConfig::default()
    };
    let ds = generate(&cfg)?;
    save_dataset(&ds, &out)?;
    let back = load_dataset(&out)?;
    for (i, f) in back.frames.iter().enumerate() {
        let valid: Vec<f64> = f.depth.iter().copied().filter(|d| *d > 0.0).collect();
        let lo = valid.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = valid.iter().copied().fold(0.0, f64::max);
        println!(
            "frame {i} ({:?}): {} of {} pixels hit, depth {lo:.3}..{hi:.3} m",
            f.split,
            valid.len(),
            f.depth.len()
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}
