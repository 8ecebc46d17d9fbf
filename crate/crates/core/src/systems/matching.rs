//! Numerical checks of the matching and extended-matching structure.

use super::UncertainSystem;
use crate::linalg::{self, fd_jacobian, rank, span_residual};
use crate::{Matrix, Vector};
use serde::{Deserialize, Serialize};

/// `[f, g](x) = (∂f/∂x) g − (∂g/∂x) f` with central-difference Jacobians.
pub fn lie_bracket<F, G>(f: F, g: G, x: &Vector) -> Vector
where
    F: Fn(&Vector) -> Vector,
    G: Fn(&Vector) -> Vector,
{
    let jf = fd_jacobian(&f, x);
    let jg = fd_jacobian(&g, x);
    jf * g(x) - jg * f(x)
}

/// `ad_f bᵢ` using the system's own Jacobians (analytic when provided).
pub fn ad_f_column(system: &dyn UncertainSystem, x: &Vector, i: usize) -> Vector {
    let b = system.input_matrix(x).column(i).into_owned();
    system.drift_jacobian(x) * b - system.input_column_jacobian(x, i) * system.drift(x)
}

fn ad_power(system: &dyn UncertainSystem, x: &Vector, i: usize, power: usize) -> Vector {
    match power {
        0 => system.input_matrix(x).column(i).into_owned(),
        1 => ad_f_column(system, x, i),
        p => {
            let inner = |z: &Vector| ad_power(system, z, i, p - 1);
            let jf = system.drift_jacobian(x);
            let jg = fd_jacobian(inner, x);
            jf * ad_power(system, x, i, p - 1) - jg * system.drift(x)
        }
    }
}

/// `[B, ad_f B, …, ad_f^depth B]` at `x`.
pub fn controllability_matrix(system: &dyn UncertainSystem, x: &Vector, depth: usize) -> Matrix {
    let n = system.state_dim();
    let m = system.input_dim();
    let mut out = Matrix::zeros(n, m * (depth + 1));
    for p in 0..=depth {
        for i in 0..m {
            out.set_column(p * m + i, &ad_power(system, x, i, p));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchingSample {
    pub x: Vec<f64>,
    /// Largest residual of `B φᵢᵀ` (matched direction of parameter `i`)
    /// outside span{B}.
    pub matched_residual: f64,
    /// Largest residual of a row `ϱᵢ` outside span{ad_f b_k}.
    pub extended_residual: f64,
    /// Whether the columns of `[B, ad_f B]` are linearly independent.
    pub independent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchingReport {
    pub samples: Vec<MatchingSample>,
    pub max_matched_residual: f64,
    pub max_extended_residual: f64,
    pub all_independent: bool,
}

pub fn check_matching(system: &dyn UncertainSystem, samples: &[Vector]) -> MatchingReport {
    let m = system.input_dim();
    let results: Vec<MatchingSample> = samples
        .iter()
        .map(|x| {
            let b = system.input_matrix(x);
            let phi = system.matched_regressor(x);
            let matched_residual = (0..system.matched_dim())
                .map(|i| {
                    let dir = &b * phi.row(i).transpose();
                    span_residual(&b, &dir)
                })
                .fold(0.0, f64::max);

            let ind = system.indicator();
            let bk_jac = (0..m).fold(Matrix::zeros(x.len(), x.len()), |acc, j| {
                if ind[j] == 0.0 {
                    acc
                } else {
                    acc + system.input_column_jacobian(x, j) * ind[j]
                }
            });
            let bk = &b * &ind;
            let ad_bk = system.drift_jacobian(x) * &bk - bk_jac * system.drift(x);
            let basis = Matrix::from_columns(&[ad_bk]);
            let rho = system.extended_regressor(x);
            let extended_residual = (0..system.extended_dim())
                .map(|i| span_residual(&basis, &rho.row(i).transpose()))
                .fold(0.0, f64::max);

            let mut stacked = Matrix::zeros(x.len(), 2 * m);
            for i in 0..m {
                stacked.set_column(i, &b.column(i));
                stacked.set_column(m + i, &ad_f_column(system, x, i));
            }
            let independent = rank(&stacked, 1e-9) == 2 * m;
            MatchingSample {
                x: x.as_slice().to_vec(),
                matched_residual,
                extended_residual,
                independent,
            }
        })
        .collect();
    MatchingReport {
        max_matched_residual: results.iter().map(|s| s.matched_residual).fold(0.0, f64::max),
        max_extended_residual: results.iter().map(|s| s.extended_residual).fold(0.0, f64::max),
        all_independent: results.iter().all(|s| s.independent),
        samples: results,
    }
}

/// Rank of the controllability matrix `[B, ad_f B, …]` at `x`.
pub fn controllability_rank(system: &dyn UncertainSystem, x: &Vector, depth: usize) -> usize {
    linalg::rank(&controllability_matrix(system, x, depth), 1e-7)
}
