//! Clenshaw-Curtis quadrature on `[0, 1]`.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub abscissae: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn order(&self) -> usize {
        self.abscissae.len()
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.abscissae
            .iter()
            .zip(&self.weights)
            .map(|(&s, &w)| w * f(s))
            .sum()
    }
}

/// `order`-point Clenshaw-Curtis rule on `[0, 1]` (nodes at the Chebyshev
/// extrema, ascending). Exact for polynomials of degree `order - 1`.
pub fn clenshaw_curtis(order: usize) -> Result<QuadratureRule> {
    if order < 2 {
        return Err(Error::InvalidArgument(format!(
            "Clenshaw-Curtis order must be at least 2, got {order}"
        )));
    }
    let n = order - 1;
    let nf = n as f64;
    let mut abscissae = Vec::with_capacity(order);
    let mut weights = Vec::with_capacity(order);
    for j in 0..=n {
        let x = (PI * (nf - 2.0 * j as f64) / (2.0 * nf)).sin();
        abscissae.push(0.5 * (1.0 - x));

        let mut acc = 1.0;
        for k in 1..=n / 2 {
            let b = if 2 * k == n { 1.0 } else { 2.0 };
            acc -= b / (4.0 * (k * k) as f64 - 1.0) * (2.0 * PI * (k * j) as f64 / nf).cos();
        }
        let c = if j == 0 || j == n { 1.0 } else { 2.0 };
        // c/n * acc integrates over [-1, 1]; halve for [0, 1]
        weights.push(0.5 * c / nf * acc);
    }
    Ok(QuadratureRule { abscissae, weights })
}
