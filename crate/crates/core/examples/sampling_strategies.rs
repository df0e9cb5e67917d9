//! Segment boundaries produced by each sampling strategy for one ray whose measured
//! depth is 3 m, and the adaptive spread schedule over training.
//!
//! cargo run --release --example sampling_strategies

use depth_nerf::sampling::{adaptive_spread, ray_draws, sample_segments, SamplerConfig, Strategy};

fn main() {
    let depth = 3.0;
    for strategy in Strategy::ALL {
        let cfg = SamplerConfig {
            strategy,
            n_samples: 8,
            ..SamplerConfig::default()
        };
        for epoch in [0, 19] {
            let s = sample_segments(&cfg, depth, epoch, &mut ray_draws(0, 0, 0, epoch));
            let shown: Vec<String> = s.boundaries.iter().map(|t| format!("{t:.2}")).collect();
            println!("{:<16} epoch {epoch:2}: {}", strategy.name(), shown.join(" "));
        }
    }

    let cfg = SamplerConfig::default();
    println!("\nadaptive spread at depth {depth} m");
    for epoch in [0, 5, 10, 20, 40, 52, 100] {
        println!("epoch {epoch:3}: {:.4} m", adaptive_spread(depth, epoch, cfg.lambda_r, cfg.lambda_m));
    }
    println!("floor: {:.4} m", depth * cfg.lambda_m / 4.0);
}
