mod common;

use common::gradcheck::{composite_error, end_to_end, field_error, primitive_errors};
use depth_nerf::autodiff::Tape;
use depth_nerf::training::{geometric_loss, photometric_loss, total_loss};

#[test]
fn every_primitive_matches_finite_differences() {
    for (op, err) in primitive_errors() {
        assert!(err < 1e-5, "{op}: relative error {err:e}");
    }
}

#[test]
fn field_forward_matches_finite_differences() {
    let err = field_error();
    assert!(err < 1e-5, "relative error {err:e}");
}

#[test]
fn compositing_matches_finite_differences() {
    let err = composite_error();
    assert!(err < 1e-4, "relative error {err:e}");
}

#[test]
fn end_to_end_loss_gradient_matches_finite_differences() {
    let err = end_to_end(false);
    assert!(err < 1e-4, "relative error {err:e}");
}

#[test]
fn detached_weight_gradient_matches_frozen_objective() {
    let err = end_to_end(true);
    assert!(err < 1e-4, "relative error {err:e}");
}

#[test]
fn exact_depth_and_zero_photometric_weight_give_zero_loss() {
    let mut t = Tape::new();
    let depth = t.leaf(3, 1, vec![2.0, 3.0, 4.5]);
    let var = t.leaf(3, 1, vec![0.1, 0.2, 0.3]);
    let target = t.constant(3, 1, vec![2.0, 3.0, 4.5]);
    let mask = t.constant(3, 1, vec![1.0; 3]);
    let color = t.leaf(3, 3, vec![0.2; 9]);
    let target_rgb = t.constant(3, 3, vec![0.9; 9]);
    let lg = geometric_loss(&mut t, depth, var, target, mask, 1e-6, true).unwrap();
    let lp = photometric_loss(&mut t, color, target_rgb).unwrap();
    let total = total_loss(&mut t, lg, lp, 0.0).unwrap();
    assert_eq!(t.scalar(total), 0.0);
    t.backward(total).unwrap();
    assert!(t.grad(depth).unwrap().iter().all(|g| *g == 0.0));
    assert!(t.grad(color).unwrap().iter().all(|g| *g == 0.0));
}
