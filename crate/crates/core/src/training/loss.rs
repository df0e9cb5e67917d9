use crate::autodiff::{Axis, Tape, Tensor};
use crate::error::{Error, Result};

/// Sum over rays and channels of `|predicted − target|`.
pub fn photometric_loss(tape: &mut Tape, pred: Tensor, target: Tensor) -> Result<Tensor> {
    let diff = tape.sub(pred, target)?;
    let abs = tape.abs(diff);
    Ok(tape.sum(abs, Axis::All))
}

/// Sum over valid rays of `|D̂ − D| / sqrt(var + eps)`.
///
/// `valid` is an R×1 0/1 mask. With `detached` the variance weight is a constant, so no
/// gradient reaches the variance through the denominator.
pub fn geometric_loss(
    tape: &mut Tape,
    depth: Tensor,
    depth_var: Tensor,
    target: Tensor,
    valid: Tensor,
    eps: f64,
    detached: bool,
) -> Result<Tensor> {
    if depth.shape() != depth_var.shape() || depth.shape() != target.shape() || depth.shape() != valid.shape() {
        return Err(Error::Shape {
            op: "geometric_loss",
            lhs: depth.shape(),
            rhs: target.shape(),
        });
    }
    let weight = if detached {
        let w: Vec<f64> = tape
            .value(depth_var)
            .iter()
            .zip(tape.value(valid))
            .map(|(v, m)| if *m > 0.0 { 1.0 / (v + eps).sqrt() } else { 0.0 })
            .collect();
        tape.constant(depth.rows(), 1, w)
    } else {
        let shifted = tape.add_scalar(depth_var, eps);
        let inv = tape.rsqrt(shifted)?;
        tape.mul(inv, valid)?
    };
    let diff = tape.sub(depth, target)?;
    let abs = tape.abs(diff);
    let weighted = tape.mul(abs, weight)?;
    Ok(tape.sum(weighted, Axis::All))
}

/// `l_g + lambda_p · l_p`.
pub fn total_loss(tape: &mut Tape, geometric: Tensor, photometric: Tensor, lambda_p: f64) -> Result<Tensor> {
    let scaled = tape.scale(photometric, lambda_p);
    tape.add(geometric, scaled)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn photometric_examples() {
        let mut tape = Tape::new();
        let pred = tape.leaf(1, 3, vec![1.0; 3]);
        let target = tape.constant(1, 3, vec![0.0; 3]);
        let l = photometric_loss(&mut tape, pred, target).unwrap();
        assert_eq!(tape.scalar(l), 3.0);
        tape.backward(l).unwrap();
        assert_eq!(tape.grad(pred).unwrap(), &[1.0; 3]);

        let same = photometric_loss(&mut tape, target, target).unwrap();
        assert_eq!(tape.scalar(same), 0.0);
    }

    #[test]
    fn photometric_gradient_is_sign() {
        let mut tape = Tape::new();
        let pred = tape.leaf(2, 3, vec![0.2, 0.5, 0.9, 0.1, 0.1, 0.7]);
        let target = tape.constant(2, 3, vec![0.3, 0.5, 0.4, 0.0, 0.6, 0.7]);
        let l = photometric_loss(&mut tape, pred, target).unwrap();
        tape.backward(l).unwrap();
        assert_eq!(tape.grad(pred).unwrap(), &[-1.0, 0.0, 1.0, 1.0, -1.0, 0.0]);
    }

    #[test]
    fn geometric_examples() {
        for detached in [true, false] {
            let mut tape = Tape::new();
            let depth = tape.leaf(1, 1, vec![2.2]);
            let var = tape.leaf(1, 1, vec![0.04]);
            let target = tape.constant(1, 1, vec![2.0]);
            let valid = tape.constant(1, 1, vec![1.0]);
            let l = geometric_loss(&mut tape, depth, var, target, valid, 0.0, detached).unwrap();
            assert!((tape.scalar(l) - 1.0).abs() < 1e-12);
            tape.backward(l).unwrap();
            let var_grad = tape.grad(var).map_or(0.0, |g| g[0]);
            if detached {
                assert_eq!(var_grad, 0.0);
            } else {
                // d/dv (0.2 v^-1/2) = -0.1 v^-3/2
                assert!((var_grad + 0.1 / 0.008).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn masked_rays_contribute_nothing() {
        let mut tape = Tape::new();
        let depth = tape.leaf(2, 1, vec![3.0, 1.0]);
        let var = tape.leaf(2, 1, vec![0.5, 0.0]);
        let target = tape.constant(2, 1, vec![0.0, 0.0]);
        let valid = tape.constant(2, 1, vec![0.0, 0.0]);
        let l = geometric_loss(&mut tape, depth, var, target, valid, 1e-6, true).unwrap();
        assert_eq!(tape.scalar(l), 0.0);
        tape.backward(l).unwrap();
        assert_eq!(tape.grad(depth).unwrap(), &[0.0, 0.0]);
    }

    #[test]
    fn total_combines_terms() {
        let mut tape = Tape::new();
        let g = tape.leaf(1, 1, vec![1.0]);
        let p = tape.leaf(1, 1, vec![0.01]);
        let t = total_loss(&mut tape, g, p, 100.0).unwrap();
        assert!((tape.scalar(t) - 2.0).abs() < 1e-15);
        let pure = total_loss(&mut tape, g, p, 0.0).unwrap();
        assert_eq!(tape.scalar(pure), 1.0);
    }
}
