mod common;

use common::grad_cases::{self, TOL};

#[test]
fn tiny_hand_model_gradients() {
    let report = grad_cases::tiny_hand();
    assert!(report.checked >= 200, "{}", report.checked);
    assert!(report.max_rel_error < TOL, "{report:?}");
}

#[test]
fn tiny_body_model_all_modalities_gradients() {
    let report = grad_cases::tiny_body();
    assert!(report.checked >= 200, "{}", report.checked);
    assert!(report.max_rel_error < TOL, "{report:?}");
}

#[test]
fn tiny_proficiency_model_gradients() {
    let report = grad_cases::tiny_proficiency();
    assert!(report.max_rel_error < TOL, "{report:?}");
}
