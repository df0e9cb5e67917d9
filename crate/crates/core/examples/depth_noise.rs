//! Inverse-depth sensor noise: how far noisy depth maps drift from the clean ones
//! at increasing noise levels.
//!
//! cargo run --release --example depth_noise

use depth_nerf::dataset::{apply_noise, generate, GenerateConfig, NoiseModel};
use depth_nerf::metrics::abs_rel;

fn main() -> depth_nerf::Result<()> {
    let ds = generate(&GenerateConfig::default())?;
    let clean = &ds.frames[0].depth;
    println!("sigma(1/m)  AbsRel  max error (m)");
    for sigma in [0.0, 0.001, 0.005, 0.01, 0.02, 0.05] {
        let noisy = apply_noise(clean, &NoiseModel { inv_depth_sigma: sigma, seed: 7 }, 0, ds.far)?;
        let worst = noisy.iter().zip(clean).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        println!("{sigma:9.3}  {:.4}  {worst:.4}", abs_rel(&noisy, clean)?);
    }
    Ok(())
}
