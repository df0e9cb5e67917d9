//! Renders novel views on an orbit from a checkpoint, writing color PNGs and depth PFMs.
//! Without a checkpoint argument a small field is trained first.
//!
//! cargo run --release --example render_orbit -- [checkpoint] [out_dir] [views]

use std::path::PathBuf;

use depth_nerf::camera::{hemisphere_poses, Intrinsics};
use depth_nerf::checkpoint;
use depth_nerf::dataset::{generate, write_pfm, write_png, GenerateConfig};
use depth_nerf::encoding::EncodingConfig;
use depth_nerf::render::render_image;
use depth_nerf::sampling::SamplerConfig;
use depth_nerf::training::{train, Quiet, TrainConfig};

fn main() -> depth_nerf::Result<()> {
    let mut args = std::env::args().skip(1);
    let ckpt = args.next().map(PathBuf::from);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("orbit"));
    let views = args.next().map(|s| s.parse().expect("views")).unwrap_or(6);

    let (cfg, state) = match ckpt {
        Some(path) => checkpoint::load(&path)?,
        None => {
            let ds = generate(&GenerateConfig {
                scene: "plane".into(),
                width: 24,
                height: 24,
                views: 4,
                ..GenerateConfig::default()
            })?;
            let cfg = TrainConfig {
                epochs: 4,
                batch_rays: 128,
                hidden_width: 32,
                color_width: 16,
                sampler: SamplerConfig {
                    n_samples: 12,
                    ..SamplerConfig::default()
                },
                encoding: EncodingConfig {
                    ipe_bands: 8,
                    ..EncodingConfig::default()
                },
                ..TrainConfig::default()
            };
            let state = train(&ds, &cfg, None, &mut Quiet)?;
            (cfg, state)
        }
    };

    std::fs::create_dir_all(&out)?;
    let intr = Intrinsics::from_fov(48, 48, 40.0)?;
    // novel views use uniform sampling: no depth is available for them
    let opts = cfg.render_options([0.0; 3], false);
    for (i, pose) in hemisphere_poses(views, 4.0, 99)?.iter().enumerate() {
        let img = render_image(&state.params, &intr, pose, i, None, &opts)?;
        write_png(&out.join(format!("{i:04}_rgb.png")), img.width, img.height, &img.color)?;
        write_pfm(&out.join(format!("{i:04}_depth.pfm")), img.width, img.height, &img.depth)?;
    }
    println!("wrote {views} views to {}", out.display());
    Ok(())
}
