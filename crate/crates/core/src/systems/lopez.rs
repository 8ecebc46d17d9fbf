//! Built-in third-order example with matched and extended-matched
//! uncertainty:
//!
//! ```text
//! ẋ₁ = x₃ − θ₁x₁
//! ẋ₂ = x₁² − x₂
//! ẋ₃ = tanh(x₂) + u − θ₂x₃ − θ₃x₁²
//! ```
//!
//! together with its parameter-dependent dual metric `W(x₁, θ₁)`.

use super::UncertainSystem;
use crate::geometry::MetricField;
use crate::{Matrix, Vector};

/// True parameters used in the published experiment: `θ₁` (extended
/// matched) and `(θ₂, θ₃)` (matched).
pub const TRUE_THETA_EM: [f64; 1] = [-1.0];
pub const TRUE_THETA_M: [f64; 2] = [-0.5, -1.5];
/// Initial estimates used in the published experiment.
pub const INITIAL_THETA_EM: [f64; 1] = [1.0];
pub const INITIAL_THETA_M: [f64; 2] = [0.0, -0.5];

#[derive(Debug, Clone, Copy, Default)]
pub struct LopezExample;

impl UncertainSystem for LopezExample {
    fn state_dim(&self) -> usize {
        3
    }

    fn input_dim(&self) -> usize {
        1
    }

    fn matched_dim(&self) -> usize {
        2
    }

    fn extended_dim(&self) -> usize {
        1
    }

    fn drift(&self, x: &Vector) -> Vector {
        Vector::from_vec(vec![x[2], x[0] * x[0] - x[1], x[1].tanh()])
    }

    fn input_matrix(&self, _x: &Vector) -> Matrix {
        Matrix::from_column_slice(3, 1, &[0.0, 0.0, 1.0])
    }

    fn matched_regressor(&self, x: &Vector) -> Matrix {
        Matrix::from_column_slice(2, 1, &[x[2], x[0] * x[0]])
    }

    fn extended_regressor(&self, x: &Vector) -> Matrix {
        Matrix::from_row_slice(1, 3, &[x[0], 0.0, 0.0])
    }

    fn indicator(&self) -> Vector {
        Vector::from_element(1, 1.0)
    }

    fn extended_regressor_dx1(&self, _x: &Vector) -> Vector {
        Vector::from_element(1, 1.0)
    }

    fn drift_jacobian(&self, x: &Vector) -> Matrix {
        let sech2 = 1.0 - x[1].tanh().powi(2);
        Matrix::from_row_slice(3, 3, &[0.0, 0.0, 1.0, 2.0 * x[0], -1.0, 0.0, 0.0, sech2, 0.0])
    }

    fn input_column_jacobian(&self, _x: &Vector, _i: usize) -> Matrix {
        Matrix::zeros(3, 3)
    }

    fn uncertain_drift_jacobian(&self, x: &Vector, theta_m: &Vector, theta_em: &Vector) -> Matrix {
        let mut jac = self.drift_jacobian(x);
        jac[(0, 0)] -= theta_em[0];
        jac[(2, 0)] -= 2.0 * theta_m[1] * x[0];
        jac[(2, 2)] -= theta_m[0];
        jac
    }
}

/// Closed-form dual metric `W(x₁, θ₁)` of the example.
pub fn example_metric(x1: f64, theta1: f64) -> Matrix {
    let w13 = 1.42 * (theta1 - 1.0);
    let w23 = -2.85 * x1;
    let w33 = 1.42 * theta1 * theta1 - 2.84 * theta1 + 1.30 * x1 * x1 + 5.79;
    Matrix::from_row_slice(3, 3, &[1.42, 0.0, w13, 0.0, 6.21, w23, w13, w23, w33])
}

/// The example dual metric as a [`MetricField`] over `x ∈ ℝ³`, `θ̂_em ∈ ℝ`.
///
/// `W` is positive definite only for `|x₁| < 23.4`; the eigenvalue bounds
/// reported by [`MetricField::bounds`] hold on `x₁ ∈ [−3, 3]`, `θ₁ ∈ [−2, 2]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LopezExampleMetric;

impl LopezExampleMetric {
    pub const W_LOWER: f64 = 0.298;
    pub const W_UPPER: f64 = 32.25;
}

impl MetricField for LopezExampleMetric {
    fn dim(&self) -> usize {
        3
    }

    fn param_dim(&self) -> usize {
        1
    }

    fn dual(&self, x: &Vector, theta: &Vector) -> Matrix {
        example_metric(x[0], theta[0])
    }

    fn dual_dx(&self, x: &Vector, _theta: &Vector) -> Vec<Matrix> {
        let d1 = Matrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 0.0, 0.0, -2.85, 0.0, -2.85, 2.60 * x[0]]);
        vec![d1, Matrix::zeros(3, 3), Matrix::zeros(3, 3)]
    }

    fn dual_dtheta(&self, _x: &Vector, theta: &Vector) -> Vec<Matrix> {
        let d = Matrix::from_row_slice(3, 3, &[0.0, 0.0, 1.42, 0.0, 0.0, 0.0, 1.42, 0.0, 2.84 * theta[0] - 2.84]);
        vec![d]
    }

    fn bounds(&self) -> (f64, f64) {
        (Self::W_LOWER, Self::W_UPPER)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sym_eigen_range;
    use approx::assert_relative_eq;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    #[test]
    fn dynamics_at_equilibrium_and_probe_states() {
        let sys = LopezExample;
        let th_m = v(&TRUE_THETA_M);
        let th_em = v(&TRUE_THETA_EM);
        let u0 = Vector::zeros(1);
        assert_eq!(sys.dynamics(&Vector::zeros(3), &u0, &th_m, &th_em), Vector::zeros(3));
        assert_eq!(
            sys.dynamics(&v(&[1.0, 0.0, 0.0]), &u0, &Vector::zeros(2), &Vector::zeros(1)),
            v(&[0.0, 1.0, 0.0])
        );
        assert_relative_eq!(
            sys.dynamics(&v(&[1.0, 0.0, 1.0]), &u0, &th_m, &th_em),
            v(&[2.0, 1.0, 2.0]),
            epsilon = 1e-15
        );
    }

    #[test]
    fn metric_entries() {
        assert_relative_eq!(
            example_metric(0.0, 0.0),
            Matrix::from_row_slice(3, 3, &[1.42, 0.0, -1.42, 0.0, 6.21, 0.0, -1.42, 0.0, 5.79]),
            epsilon = 1e-14
        );
        assert_relative_eq!(
            example_metric(1.0, 1.0),
            Matrix::from_row_slice(3, 3, &[1.42, 0.0, 0.0, 0.0, 6.21, -2.85, 0.0, -2.85, 5.67]),
            epsilon = 1e-14
        );
    }

    #[test]
    fn metric_positive_definite_and_bounded_on_box() {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..100 {
            for j in 0..100 {
                let x1 = -3.0 + 6.0 * i as f64 / 99.0;
                let t1 = -2.0 + 4.0 * j as f64 / 99.0;
                let (a, b) = sym_eigen_range(&example_metric(x1, t1));
                lo = lo.min(a);
                hi = hi.max(b);
            }
        }
        assert!(lo > 0.0);
        assert!(lo >= LopezExampleMetric::W_LOWER && hi <= LopezExampleMetric::W_UPPER);
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        struct Fd;
        impl MetricField for Fd {
            fn dim(&self) -> usize {
                3
            }
            fn param_dim(&self) -> usize {
                1
            }
            fn dual(&self, x: &Vector, t: &Vector) -> Matrix {
                example_metric(x[0], t[0])
            }
            fn bounds(&self) -> (f64, f64) {
                (1.0, 1.0)
            }
        }
        let x = v(&[0.7, -1.2, 2.0]);
        let t = v(&[-0.4]);
        let exact = LopezExampleMetric;
        for (a, b) in exact.dual_dx(&x, &t).iter().zip(Fd.dual_dx(&x, &t)) {
            assert_relative_eq!(*a, b, epsilon = 1e-7);
        }
        assert_relative_eq!(exact.dual_dtheta(&x, &t)[0], Fd.dual_dtheta(&x, &t)[0], epsilon = 1e-7);
    }

    #[test]
    fn analytic_jacobians_match_finite_differences() {
        let sys = LopezExample;
        let x = v(&[0.4, -0.9, 1.3]);
        let th_m = v(&[0.3, -0.8]);
        let th_em = v(&[1.7]);
        let fd = crate::linalg::fd_jacobian(|z| sys.uncertain_drift(z, &th_m, &th_em), &x);
        assert_relative_eq!(sys.uncertain_drift_jacobian(&x, &th_m, &th_em), fd, epsilon = 1e-8);
        let fd_f = crate::linalg::fd_jacobian(|z| sys.drift(z), &x);
        assert_relative_eq!(sys.drift_jacobian(&x), fd_f, epsilon = 1e-8);
    }
}
