//! Trains a reduced field on the sphere scene with depth-guided sampling, saves a
//! checkpoint, and scores the held-out views.
//!
//! cargo run --release --example train_and_evaluate -- [epochs] [checkpoint_path]

use std::path::PathBuf;

use depth_nerf::checkpoint;
use depth_nerf::dataset::{generate, GenerateConfig, Split};
use depth_nerf::encoding::EncodingConfig;
use depth_nerf::sampling::SamplerConfig;
use depth_nerf::training::{evaluate, train, EpochSummary, StepReport, TrainConfig, TrainObserver, TrainState};

struct Progress;

impl TrainObserver for Progress {
    fn on_step(&mut self, _report: &StepReport) -> depth_nerf::Result<()> {
        Ok(())
    }

    fn on_epoch(&mut self, _state: &TrainState, s: &EpochSummary) -> depth_nerf::Result<()> {
        println!("epoch {:2}  l_p {:.4}  l_g {:.4}  lr {:.1e}  {:.1}s", s.epoch, s.l_p, s.l_g, s.lr, s.wall_time);
        Ok(())
    }
}

fn main() -> depth_nerf::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().map(|s| s.parse().expect("epochs")).unwrap_or(10);
    let ckpt = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("sphere.ckpt"));

    let ds = generate(&GenerateConfig {
        scene: "sphere".into(),
        width: 32,
        height: 32,
        views: 8,
        test_views: 2,
        ..GenerateConfig::default()
    })?;
    let cfg = TrainConfig {
        epochs,
        batch_rays: 256,
        hidden_width: 64,
        color_width: 32,
        sampler: SamplerConfig {
            n_samples: 16,
            global_near: ds.near,
            global_far: ds.far,
            ..SamplerConfig::default()
        },
        encoding: EncodingConfig {
            ipe_bands: 10,
            ..EncodingConfig::default()
        },
        ..TrainConfig::default()
    };
    let state = train(&ds, &cfg, None, &mut Progress)?;
    checkpoint::save(&ckpt, &cfg, &state)?;
    println!("checkpoint: {}", ckpt.display());

    let held_out = ds.split_indices(Split::Test);
    for with_depth in [false, true] {
        let (report, _) = evaluate(&state.params, &ds, &cfg, &held_out, with_depth)?;
        let mode = if with_depth { "depth-guided" } else { "uniform" };
        println!("\nheld-out views, {mode} sampling\n{}", report.to_table());
    }
    Ok(())
}
