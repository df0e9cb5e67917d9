//! Runs one of the scripted comparisons at a reduced scale and prints its table.
//!
//! cargo run --release --example run_experiment -- [sampling|sample-count|view-count|noise] [out_dir]

use std::path::PathBuf;

use depth_nerf::dataset::GenerateConfig;
use depth_nerf::encoding::EncodingConfig;
use depth_nerf::experiments::{run, Experiment, ExperimentSettings};
use depth_nerf::sampling::SamplerConfig;
use depth_nerf::training::TrainConfig;

fn main() -> depth_nerf::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let experiment: Experiment = args.next().unwrap_or_else(|| "sampling".into()).parse()?;
    let out = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join(format!("experiment_{}", experiment.name())));

    let settings = ExperimentSettings {
        data: GenerateConfig {
            width: 24,
            height: 24,
            ..GenerateConfig::default()
        },
        train: TrainConfig {
            epochs: 3,
            batch_rays: 256,
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
        },
        sample_counts: vec![8, 16, 32],
        view_counts: vec![4, 8, 16],
        ..ExperimentSettings::default()
    };
    let result = run(experiment, &settings, &out)?;
    print!("{}", result.to_table());
    println!("artifacts in {}", out.display());
    Ok(())
}
