//! Finite-difference checks of every tape operation and of the total training loss.

mod common;

use common::grad;

fn assert_within(name: &str, worst: f64) {
    assert!(worst <= grad::TOL, "{name}: worst relative error {worst:.2e} over {} instances", grad::INSTANCES);
}

#[test]
fn conv2d() {
    assert_within("conv2d", grad::conv2d());
}

#[test]
fn conv_transpose2d() {
    assert_within("conv_transpose2d", grad::conv_transpose2d());
}

#[test]
fn linear() {
    assert_within("linear", grad::linear());
}

#[test]
fn relu_away_from_kink() {
    assert_within("relu", grad::relu());
}

#[test]
fn sigmoid() {
    assert_within("sigmoid", grad::sigmoid());
}

#[test]
fn gaussian_sample() {
    assert_within("gaussian_sample", grad::gaussian_sample());
}

#[test]
fn concat_reshape_gather_affine() {
    assert_within("concat/reshape/gather_rows/column_affine", grad::concat_reshape_gather_affine());
}

#[test]
fn mse_and_bce() {
    assert_within("mse/bce", grad::mse_and_bce());
}

#[test]
fn bce_with_logits_rows() {
    assert_within("bce_with_logits_rows", grad::bce_with_logits_rows());
}

#[test]
fn kl_to_standard_normal() {
    assert_within("kl_to_standard_normal", grad::kl_to_standard_normal());
}

#[test]
fn add_scale_sum() {
    assert_within("add/scale/sum", grad::add_scale_sum());
}

#[test]
fn total_loss_gradient() {
    assert_within("total_loss", grad::total_loss());
}
