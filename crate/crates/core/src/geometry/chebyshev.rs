//! Chebyshev-Gauss-Lobatto nodes on `[0, 1]`, the spectral differentiation
//! matrix and barycentric interpolation.

use crate::{Error, Matrix, Result};
use std::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct ChebyshevLobatto {
    nodes: Vec<f64>,
    bary: Vec<f64>,
    diff: Matrix,
}

impl ChebyshevLobatto {
    /// `count` nodes `s_k = (1 - cos(πk/N)) / 2`, `k = 0..=N`, ascending from
    /// 0 to 1.
    pub fn new(count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::InvalidArgument(format!(
                "Chebyshev-Lobatto grid needs at least 2 nodes, got {count}"
            )));
        }
        let n = count - 1;
        let nodes: Vec<f64> = (0..=n)
            .map(|k| {
                // sin form keeps the nodes exactly symmetric about 1/2
                let x = (PI * (n as f64 - 2.0 * k as f64) / (2.0 * n as f64)).sin();
                0.5 * (1.0 - x)
            })
            .collect();
        let bary: Vec<f64> = (0..=n)
            .map(|k| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                if k == 0 || k == n {
                    0.5 * sign
                } else {
                    sign
                }
            })
            .collect();
        let mut diff = Matrix::zeros(count, count);
        for i in 0..count {
            let mut row_sum = 0.0;
            for j in 0..count {
                if i != j {
                    let d = (bary[j] / bary[i]) / (nodes[i] - nodes[j]);
                    diff[(i, j)] = d;
                    row_sum += d;
                }
            }
            // negative-sum trick: rows of D annihilate constants exactly
            diff[(i, i)] = -row_sum;
        }
        Ok(Self { nodes, bary, diff })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Differentiation matrix on `[0, 1]`: `(D v)_i = p'(s_i)` for the
    /// interpolant `p` of nodal values `v`.
    pub fn diff(&self) -> &Matrix {
        &self.diff
    }

    /// Row `k` holds the Lagrange basis values at `at[k]`, so that
    /// `values_at = L · nodal_values`.
    pub fn interpolation_matrix(&self, at: &[f64]) -> Matrix {
        let mut out = Matrix::zeros(at.len(), self.len());
        for (r, &s) in at.iter().enumerate() {
            if let Some(j) = self.nodes.iter().position(|&sj| (s - sj).abs() < 1e-14) {
                out[(r, j)] = 1.0;
                continue;
            }
            let terms: Vec<f64> = self
                .nodes
                .iter()
                .zip(&self.bary)
                .map(|(&sj, &wj)| wj / (s - sj))
                .collect();
            let denom: f64 = terms.iter().sum();
            for (j, t) in terms.iter().enumerate() {
                out[(r, j)] = t / denom;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn nodes_are_ascending_with_pinned_ends() {
        let grid = ChebyshevLobatto::new(9).unwrap();
        let s = grid.nodes();
        assert_eq!(s[0], 0.0);
        assert_eq!(s[8], 1.0);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert_relative_eq!(s[4], 0.5, epsilon = 1e-16);
    }

    #[test]
    fn differentiates_polynomials_exactly() {
        let grid = ChebyshevLobatto::new(9).unwrap();
        let s = grid.nodes();
        // p(s) = s^8 - 3 s^5 + s, degree N
        let vals = nalgebra::DVector::from_iterator(9, s.iter().map(|&t| t.powi(8) - 3.0 * t.powi(5) + t));
        let d = grid.diff() * vals;
        for (k, &t) in s.iter().enumerate() {
            let exact = 8.0 * t.powi(7) - 15.0 * t.powi(4) + 1.0;
            assert_relative_eq!(d[k], exact, epsilon = 1e-11);
        }
    }

    #[test]
    fn interpolates_polynomials_exactly() {
        let grid = ChebyshevLobatto::new(5).unwrap();
        let vals = nalgebra::DVector::from_iterator(5, grid.nodes().iter().map(|&t| t.powi(4) - t));
        let at = [0.0, 0.1234, 0.5, 0.97, 1.0];
        let interp = grid.interpolation_matrix(&at) * vals;
        for (k, &t) in at.iter().enumerate() {
            assert_relative_eq!(interp[k], t.powi(4) - t, epsilon = 1e-14);
        }
    }

    #[test]
    fn rejects_single_node() {
        assert!(ChebyshevLobatto::new(1).is_err());
    }
}
