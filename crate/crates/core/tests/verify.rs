mod common;

use ccm_adapt::geometry::{ConstantMetric, MetricField};
use ccm_adapt::linalg::{left_null_space, max_sym_eigenvalue};
use ccm_adapt::systems::{ExpressionSystem, ExpressionSystemSpec, LopezExample, LopezExampleMetric, UncertainSystem};
use ccm_adapt::verify::{
    certify, check_dual_ccm, check_killing, check_lemma4_identity, check_matched_invariance, projected_condition,
    Axis, VerificationGrid, LAMBDA_RESOLUTION,
};
use ccm_adapt::{Execution, Matrix, Vector};
use common::v;
use proptest::prelude::*;

fn example_grid() -> VerificationGrid {
    VerificationGrid::example_default()
}

fn coarse_grid(x3: Axis) -> VerificationGrid {
    VerificationGrid {
        x: vec![Axis::range(-3.0, 3.0, 13), Axis::fixed(0.0), x3],
        theta: vec![Axis::range(-2.0, 2.0, 9)],
        eps_psd: 1e-8,
        execution: Execution::Sequential,
    }
}

fn spec_samples() -> Vec<Vector> {
    vec![v(&[-0.5, -1.5]), v(&[2.0, 2.0]), v(&[0.0, 0.0])]
}

/// The example metric plus `c·x₃` on the `(1, 1)` entry, which breaks the
/// Killing property of the input column `e₃`.
struct TiltedMetric(f64);

impl MetricField for TiltedMetric {
    fn dim(&self) -> usize {
        3
    }

    fn param_dim(&self) -> usize {
        1
    }

    fn dual(&self, x: &Vector, theta: &Vector) -> Matrix {
        let mut w = LopezExampleMetric.dual(x, theta);
        w[(0, 0)] += self.0 * x[2];
        w
    }

    fn bounds(&self) -> (f64, f64) {
        LopezExampleMetric.bounds()
    }
}

#[test]
fn example_metric_certifies_at_the_nominal_rate_only() {
    let ok = check_dual_ccm(&LopezExample, &LopezExampleMetric, &example_grid(), 0.1).unwrap();
    assert!(ok.pass, "max eigenvalue {}", ok.max_eigenvalue);
    assert!(ok.lambda_certified.unwrap() >= 0.1);
    let bad = check_dual_ccm(&LopezExample, &LopezExampleMetric, &example_grid(), 1e3).unwrap();
    assert!(!bad.pass);
    let (x, theta) = example_grid().point(bad.worst_point.index);
    assert_eq!(x.as_slice(), bad.worst_point.x.as_slice());
    assert_eq!(theta.as_slice(), bad.worst_point.theta.as_slice());
}

#[test]
fn certified_rate_is_a_sharp_threshold() {
    let grid = example_grid();
    let rate = check_dual_ccm(&LopezExample, &LopezExampleMetric, &grid, 0.0)
        .unwrap()
        .lambda_certified
        .unwrap();
    assert!(check_dual_ccm(&LopezExample, &LopezExampleMetric, &grid, rate).unwrap().pass);
    assert!(!check_dual_ccm(&LopezExample, &LopezExampleMetric, &grid, rate + 2.0 * LAMBDA_RESOLUTION)
        .unwrap()
        .pass);
}

#[test]
fn killing_residual_vanishes_for_the_example() {
    let grid = coarse_grid(Axis::range(-1.0, 1.0, 5));
    assert_eq!(check_killing(&LopezExample, &LopezExampleMetric, &grid).unwrap(), 0.0);
}

#[test]
fn killing_residual_of_a_tilted_metric_is_its_x3_derivative() {
    let c = 0.3;
    let grid = coarse_grid(Axis::range(-1.0, 1.0, 5));
    let r = check_killing(&LopezExample, &TiltedMetric(c), &grid).unwrap();
    assert!((r - c).abs() <= 1e-6, "{r}");
}

#[test]
fn lemma4_identity_holds_for_the_example() {
    assert!(check_lemma4_identity(&LopezExample, &LopezExampleMetric, &example_grid()).unwrap() <= 1e-6);
    let at_origin = VerificationGrid {
        x: vec![Axis::fixed(0.0); 3],
        theta: vec![Axis::fixed(0.0)],
        eps_psd: 1e-8,
        execution: Execution::Sequential,
    };
    assert!(check_lemma4_identity(&LopezExample, &LopezExampleMetric, &at_origin).unwrap() <= 1e-6);
}

#[test]
fn lemma4_identity_is_trivial_without_extended_uncertainty() {
    let sys = ExpressionSystem::from_spec(&ExpressionSystemSpec {
        drift: vec!["x3".into(), "x1^2 - x2".into(), "tanh(x2)".into()],
        input_matrix: vec![vec!["0".into()], vec!["0".into()], vec!["1".into()]],
        matched_regressor: vec![vec!["x3".into()], vec!["x1^2".into()]],
        extended_regressor: vec![vec!["0".into(), "0".into(), "0".into()]],
        extended_regressor_dx1: None,
        indicator: vec![1.0],
    })
    .unwrap();
    assert_eq!(sys.extended_dim(), 1);
    let metric = ConstantMetric::identity(3, 1);
    assert_eq!(check_lemma4_identity(&sys, &metric, &coarse_grid(Axis::fixed(0.0))).unwrap(), 0.0);
}

#[test]
fn lemma4_identity_fails_for_a_parameter_free_metric() {
    let w = Matrix::from_row_slice(3, 3, &[2.0, 0.5, 0.1, 0.5, 1.0, 0.2, 0.1, 0.2, 1.5]);
    let metric = ConstantMetric::new(w, 1).unwrap();
    assert!(check_lemma4_identity(&LopezExample, &metric, &coarse_grid(Axis::fixed(0.0))).unwrap() > 1e-3);
}

#[test]
fn matched_uncertainty_does_not_change_the_verdict() {
    let report =
        check_matched_invariance(&LopezExample, &LopezExampleMetric, &example_grid(), 0.1, &spec_samples()).unwrap();
    assert!(report.pass && report.nominal_pass);
    assert_eq!(report.samples.len(), 3);
    let zero = &report.samples[2];
    assert_eq!(zero.max_eigenvalue, report.nominal_max_eigenvalue);
}

#[test]
fn matched_invariance_breaks_with_the_killing_property() {
    let grid = coarse_grid(Axis::range(-1.0, 1.0, 5));
    let metric = TiltedMetric(0.3);
    let report = check_matched_invariance(&LopezExample, &metric, &grid, 0.1, &spec_samples()).unwrap();
    assert!(!report.pass, "{report:?}");
}

#[test]
fn full_certification_of_the_example() {
    let report = certify(&LopezExample, &LopezExampleMetric, &example_grid(), 0.1, &spec_samples()).unwrap();
    assert!(report.pass);
    assert!(report.killing_pass && report.lemma4_pass && report.matched.pass);
    let identity = certify(&LopezExample, &ConstantMetric::identity(3, 0), &example_grid(), 0.1, &spec_samples())
        .unwrap();
    assert!(!identity.pass);
    assert_eq!(identity.contraction.killing_residual_max, Some(0.0));
}

#[test]
fn sequential_and_parallel_scans_agree() {
    let mut grid = example_grid();
    grid.execution = Execution::Sequential;
    let seq = check_dual_ccm(&LopezExample, &LopezExampleMetric, &grid, 0.1).unwrap();
    grid.execution = Execution::Parallel;
    let par = check_dual_ccm(&LopezExample, &LopezExampleMetric, &grid, 0.1).unwrap();
    assert_eq!(seq, par);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn lower_rates_keep_passing(l1 in 0.0..2.0f64, l2 in 0.0..2.0f64) {
        let (lo, hi) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
        let grid = coarse_grid(Axis::fixed(0.0));
        let pass_hi = check_dual_ccm(&LopezExample, &LopezExampleMetric, &grid, hi).unwrap();
        let pass_lo = check_dual_ccm(&LopezExample, &LopezExampleMetric, &grid, lo).unwrap();
        prop_assert!(pass_lo.max_eigenvalue <= pass_hi.max_eigenvalue);
        prop_assert!(!pass_hi.pass || pass_lo.pass);
    }

    #[test]
    fn projected_condition_is_basis_independent(
        x1 in -3.0..3.0f64, t1 in -2.0..2.0f64, angle in 0.0..std::f64::consts::TAU, lambda in 0.0..2.0f64,
    ) {
        let x = v(&[x1, 0.0, 0.0]);
        let th = v(&[t1]);
        let w = LopezExampleMetric.dual(&x, &th);
        let a = LopezExample.uncertain_drift_jacobian(&x, &Vector::zeros(2), &th);
        let f = LopezExample.uncertain_drift(&x, &Vector::zeros(2), &th);
        let w_dot = LopezExampleMetric
            .dual_dx(&x, &th)
            .iter()
            .zip(f.iter())
            .fold(Matrix::zeros(3, 3), |acc, (d, fi)| acc + d * *fi);
        let b_perp = left_null_space(&LopezExample.input_matrix(&x));
        let (c, s) = (angle.cos(), angle.sin());
        let rot = Matrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let e1 = max_sym_eigenvalue(&projected_condition(&w, &a, &w_dot, &b_perp, lambda));
        let e2 = max_sym_eigenvalue(&projected_condition(&w, &a, &w_dot, &(&b_perp * rot), lambda));
        prop_assert!((e1 - e2).abs() <= 1e-10 * (1.0 + e1.abs()));
    }
}
