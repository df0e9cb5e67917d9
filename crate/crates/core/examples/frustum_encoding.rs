//! Gaussian moments of conical frustums along a pixel cone, and how strongly the
//! integrated positional encoding damps each frequency band for near and far segments.
//!
//! cargo run --release --example frustum_encoding

use depth_nerf::camera::{ray_for_pixel, Intrinsics, Pose};
use depth_nerf::encoding::{frustum_gaussian, frustum_moments, integrated_pe, Attenuation};

fn main() -> depth_nerf::Result<()> {
    let intr = Intrinsics::from_fov(64, 64, 40.0)?;
    let ray = ray_for_pixel(&intr, &Pose::identity(), 32, 32, 1.0, 7.0);
    println!("pixel cone radius at unit distance: {:.5}", ray.radius);
    println!("\n  t0    t1     mean_t     var_t        var_r");
    for (t0, t1) in [(1.0, 1.1), (2.0, 2.5), (4.0, 4.1), (6.0, 7.0)] {
        let m = frustum_moments(t0, t1, ray.radius);
        println!("{t0:5.2} {t1:5.2}  {:9.5}  {:.3e}  {:.3e}", m.mean_t, m.var_t, m.var_r);
    }

    let bands = 12;
    println!("\nmean |feature| per band (near segment vs far segment)");
    let near = integrated_pe(&frustum_gaussian(&ray, 1.0, 1.05), bands, Attenuation::FrequencyLifted);
    let far = integrated_pe(&frustum_gaussian(&ray, 6.0, 6.9), bands, Attenuation::FrequencyLifted);
    let magnitude = |e: &[f64], l: usize| {
        (0..3)
            .map(|k| e[3 * l + k].hypot(e[3 * bands + 3 * l + k]))
            .sum::<f64>()
            / 3.0
    };
    for l in 0..bands {
        println!("band {l:2}  near {:.4}  far {:.4}", magnitude(&near, l), magnitude(&far, l));
    }
    Ok(())
}
