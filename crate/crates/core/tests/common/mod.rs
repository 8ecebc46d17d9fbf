#![allow(dead_code)]

use ccm_adapt::control::ControllerConfig;
use ccm_adapt::sim::{AdaptiveState, Scenario, SimConfig};
use ccm_adapt::systems::lopez::{INITIAL_THETA_EM, INITIAL_THETA_M, TRUE_THETA_EM, TRUE_THETA_M};
use ccm_adapt::systems::{LopezExample, LopezExampleMetric, Setpoint, SystemModel};
use ccm_adapt::{Matrix, Vector};
use std::sync::Arc;

pub fn v(xs: &[f64]) -> Vector {
    Vector::from_column_slice(xs)
}

/// 3×3 inverse by cofactors, independent of any factorization.
pub fn inverse3(a: &Matrix) -> Matrix {
    let c = |i: usize, j: usize| {
        let (r0, r1) = ((i + 1) % 3, (i + 2) % 3);
        let (c0, c1) = ((j + 1) % 3, (j + 2) % 3);
        a[(r0, c0)] * a[(r1, c1)] - a[(r0, c1)] * a[(r1, c0)]
    };
    let det = a[(0, 0)] * c(0, 0) + a[(0, 1)] * c(0, 1) + a[(0, 2)] * c(0, 2);
    Matrix::from_fn(3, 3, |i, j| c(j, i) / det)
}

/// Dual metric of the example system, typed in from its closed form.
pub fn w_example(x1: f64, t1: f64) -> Matrix {
    Matrix::from_row_slice(
        3,
        3,
        &[
            1.42,
            0.0,
            1.42 * (t1 - 1.0),
            0.0,
            6.21,
            -2.85 * x1,
            1.42 * (t1 - 1.0),
            -2.85 * x1,
            1.42 * t1 * t1 - 2.84 * t1 + 1.30 * x1 * x1 + 5.79,
        ],
    )
}

pub fn lopez_model() -> SystemModel {
    SystemModel::new("lopez", Arc::new(LopezExample), v(&TRUE_THETA_M), v(&TRUE_THETA_EM)).unwrap()
}

pub fn lopez_scenario(controller: ControllerConfig, x0: &[f64], t_final: f64) -> Scenario {
    Scenario {
        name: "test".into(),
        model: lopez_model(),
        metric: Arc::new(LopezExampleMetric),
        controller,
        setpoint: Setpoint::origin(3, 1),
        initial: AdaptiveState {
            t: 0.0,
            x: v(x0),
            theta_m: v(&INITIAL_THETA_M),
            theta_em: v(&INITIAL_THETA_EM),
        },
        sim: SimConfig {
            t_final,
            ..SimConfig::default()
        },
    }
}

pub fn adaptive_controller() -> ControllerConfig {
    ControllerConfig {
        lambda: 0.5,
        adapt_m: true,
        adapt_em: true,
        gamma_m: vec![2.0, 2.0],
        gamma_em: vec![10.0],
        ..ControllerConfig::default()
    }
}
