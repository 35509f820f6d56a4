mod common;

use beb_core::normalform::BifKind;
use common::*;

#[test]
fn saddle_node_flip_covariance() {
    let at = codim2_point(BifKind::SaddleNode).unwrap();
    let dev = flip_covariance(&at).unwrap();
    assert!(dev < 1e-8, "deviation {dev:e}");
}

#[test]
fn period_doubling_flip_covariance() {
    let at = codim2_point(BifKind::PeriodDoubling).unwrap();
    let dev = flip_covariance(&at).unwrap();
    assert!(dev < 1e-8, "deviation {dev:e}");
}

#[test]
fn fold_branches_swap_under_flip() {
    let at = slice_point(BifKind::SaddleNode).unwrap();
    let mus: Vec<f64> = (0..=10).map(|i| at.mu_c * (0.5 + 0.06 * i as f64)).collect();
    let gap = branch_swap(&at, &mus).unwrap();
    assert!(gap < 1e-10, "set difference {gap:e}");
}

#[test]
fn flip_branches_swap_under_flip() {
    let at = slice_point(BifKind::PeriodDoubling).unwrap();
    let mus: Vec<f64> = (0..=10).map(|i| at.mu_c * (0.5 + 0.06 * i as f64)).collect();
    let gap = branch_swap(&at, &mus).unwrap();
    assert!(gap < 1e-10, "set difference {gap:e}");
}

#[test]
fn fold_separation_scales_as_square_root() {
    let at = slice_point(BifKind::SaddleNode).unwrap();
    let s = separation_slope(&at, &[0.01, 0.02, 0.04, 0.08, 0.16]).unwrap();
    assert!((s - 0.5).abs() < 0.05, "slope {s}");
}

#[test]
fn flip_separation_scales_as_square_root() {
    let at = slice_point(BifKind::PeriodDoubling).unwrap();
    let s = separation_slope(&at, &[0.01, 0.02, 0.04, 0.08, 0.16]).unwrap();
    assert!((s - 0.5).abs() < 0.05, "slope {s}");
}
