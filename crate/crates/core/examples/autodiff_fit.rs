//! Fits a small ReLU network to `sin(3x)` with the reverse-mode tape and Adam.
//!
//! cargo run --release --example autodiff_fit

use depth_nerf::autodiff::{Axis, Tape};
use depth_nerf::training::Adam;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> depth_nerf::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let hidden = 32;
    let mut params = vec![
        (0..hidden).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<f64>>(),
        (0..hidden).map(|_| rng.random_range(-1.0..1.0)).collect(),
        (0..hidden).map(|_| rng.random_range(-0.3..0.3)).collect(),
        vec![0.0],
    ];
    let shapes = [(1, hidden), (1, hidden), (hidden, 1), (1, 1)];
    let mut adam = Adam::new(params.iter().map(Vec::len));
    let xs: Vec<f64> = (0..64).map(|i| -1.0 + 2.0 * i as f64 / 63.0).collect();
    let ys: Vec<f64> = xs.iter().map(|x| (3.0 * x).sin()).collect();

    for step in 0..=2000 {
        let mut tape = Tape::new();
        let leaves: Vec<_> = params
            .iter()
            .zip(shapes)
            .map(|(p, (r, c))| tape.leaf(r, c, p.clone()))
            .collect();
        let x = tape.constant(xs.len(), 1, xs.clone());
        let y = tape.constant(ys.len(), 1, ys.clone());
        let h = tape.matmul(x, leaves[0])?;
        let h = tape.add_bias(h, leaves[1])?;
        let h = tape.relu(h);
        let out = tape.matmul(h, leaves[2])?;
        let out = tape.add_bias(out, leaves[3])?;
        let diff = tape.sub(out, y)?;
        let sq = tape.mul(diff, diff)?;
        let loss = tape.mean(sq, Axis::All);
        tape.backward(loss)?;
        if step % 400 == 0 {
            println!("step {step:4}  mse {:.6}", tape.scalar(loss));
        }
        let grads: Vec<Vec<f64>> = leaves.iter().map(|&t| tape.grad(t).map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec)).collect();
        adam.update(params.iter_mut().map(Vec::as_mut_slice), &grads, 1e-2)?;
    }
    Ok(())
}
