//! Riemannian energy of curves stored as nodal values on a
//! Chebyshev-Gauss-Lobatto grid, evaluated with a Clenshaw-Curtis rule.

use super::chebyshev::ChebyshevLobatto;
use super::metric::MetricField;
use super::quadrature::QuadratureRule;
use crate::{Error, Matrix, Result, Vector};

/// Precomputed maps from nodal values to curve points and tangents at the
/// quadrature abscissae.
///
/// A curve is an `n × (N+1)` matrix whose column `k` is `c(s_k)`.
#[derive(Debug, Clone)]
pub struct CurveDiscretization {
    grid: ChebyshevLobatto,
    rule: QuadratureRule,
    // K × (N+1): c(σ_k) = X · interpᵀ
    interp: Matrix,
    // K × (N+1): c_s(σ_k) = X · interp_diffᵀ
    interp_diff: Matrix,
}

/// Energy, its gradient with respect to every nodal value, and the pointwise
/// speed `c_sᵀ M c_s` at the quadrature abscissae.
#[derive(Debug, Clone)]
pub struct EnergyEval {
    pub energy: f64,
    pub gradient: Matrix,
    pub speed: Vec<f64>,
}

impl CurveDiscretization {
    pub fn new(grid: ChebyshevLobatto, rule: QuadratureRule) -> Self {
        let interp = grid.interpolation_matrix(&rule.abscissae);
        let interp_diff = &interp * grid.diff();
        Self {
            grid,
            rule,
            interp,
            interp_diff,
        }
    }

    pub fn grid(&self) -> &ChebyshevLobatto {
        &self.grid
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn node_count(&self) -> usize {
        self.grid.len()
    }

    /// Curve values at the quadrature abscissae (`n × K`).
    pub fn points(&self, curve: &Matrix) -> Matrix {
        curve * self.interp.transpose()
    }

    /// Curve tangents at the quadrature abscissae (`n × K`).
    pub fn tangents(&self, curve: &Matrix) -> Matrix {
        curve * self.interp_diff.transpose()
    }

    /// Tangents at the nodes (`n × (N+1)`).
    pub fn nodal_tangents(&self, curve: &Matrix) -> Matrix {
        curve * self.grid.diff().transpose()
    }

    fn check_shape(&self, curve: &Matrix, metric: &dyn MetricField) -> Result<()> {
        if curve.ncols() != self.node_count() {
            return Err(Error::Dimension(format!(
                "curve has {} nodes, discretization expects {}",
                curve.ncols(),
                self.node_count()
            )));
        }
        if curve.nrows() != metric.dim() {
            return Err(Error::Dimension(format!(
                "curve lives in R^{}, metric in R^{}",
                curve.nrows(),
                metric.dim()
            )));
        }
        Ok(())
    }

    pub fn energy(&self, curve: &Matrix, metric: &dyn MetricField, theta: &Vector) -> Result<f64> {
        self.check_shape(curve, metric)?;
        let pts = self.points(curve);
        let tan = self.tangents(curve);
        let mut e = 0.0;
        for (k, w) in self.rule.weights.iter().enumerate() {
            let x = pts.column(k).into_owned();
            let cs = tan.column(k).into_owned();
            let m = metric.metric(&x, theta)?;
            e += w * cs.dot(&(&m * &cs));
        }
        Ok(e)
    }

    /// Energy with its analytic gradient. Uses `∂M/∂xᵢ = -M ∂W/∂xᵢ M`, so
    /// only the dual metric derivatives are needed.
    pub fn energy_and_gradient(&self, curve: &Matrix, metric: &dyn MetricField, theta: &Vector) -> Result<EnergyEval> {
        self.check_shape(curve, metric)?;
        let n = curve.nrows();
        let k_count = self.rule.order();
        let pts = self.points(curve);
        let tan = self.tangents(curve);
        let mut weighted_mcs = Matrix::zeros(n, k_count);
        let mut weighted_g = Matrix::zeros(n, k_count);
        let mut speed = Vec::with_capacity(k_count);
        let mut energy = 0.0;
        for (k, &w) in self.rule.weights.iter().enumerate() {
            let x = pts.column(k).into_owned();
            let cs = tan.column(k).into_owned();
            let m = metric.metric(&x, theta)?;
            let v = &m * &cs;
            let sp = cs.dot(&v);
            speed.push(sp);
            energy += w * sp;
            weighted_mcs.set_column(k, &(&v * (2.0 * w)));
            for (i, dw) in metric.dual_dx(&x, theta).iter().enumerate() {
                weighted_g[(i, k)] = -w * v.dot(&(dw * &v));
            }
        }
        let gradient = weighted_mcs * &self.interp_diff + weighted_g * &self.interp;
        Ok(EnergyEval {
            energy,
            gradient,
            speed,
        })
    }

    /// Riemannian length `∫ √(c_sᵀ M c_s) ds` by the same rule.
    pub fn length(&self, curve: &Matrix, metric: &dyn MetricField, theta: &Vector) -> Result<f64> {
        Ok(self
            .speed(curve, metric, theta)?
            .iter()
            .zip(&self.rule.weights)
            .map(|(s, w)| w * s.max(0.0).sqrt())
            .sum())
    }

    /// Pointwise `c_sᵀ M c_s` at the quadrature abscissae.
    pub fn speed(&self, curve: &Matrix, metric: &dyn MetricField, theta: &Vector) -> Result<Vec<f64>> {
        self.check_shape(curve, metric)?;
        let pts = self.points(curve);
        let tan = self.tangents(curve);
        (0..self.rule.order())
            .map(|k| {
                let cs = tan.column(k).into_owned();
                let m = metric.metric(&pts.column(k).into_owned(), theta)?;
                Ok(cs.dot(&(&m * &cs)))
            })
            .collect()
    }

    /// `∫₀¹ r(c(s)) · c_s(s) ds` for a covector field `r`.
    pub fn line_integral<F>(&self, curve: &Matrix, r: F) -> f64
    where
        F: Fn(&Vector) -> Vector,
    {
        let pts = self.points(curve);
        let tan = self.tangents(curve);
        self.rule
            .weights
            .iter()
            .enumerate()
            .map(|(k, w)| w * r(&pts.column(k).into_owned()).dot(&tan.column(k)))
            .sum()
    }
}

/// Energy of a curve given by nodal values on a Chebyshev-Gauss-Lobatto grid
/// (one column per node), integrated with `rule`.
pub fn curve_energy(curve: &Matrix, metric: &dyn MetricField, theta: &Vector, rule: &QuadratureRule) -> Result<f64> {
    if curve.ncols() < 2 {
        return Err(Error::InvalidArgument("a curve needs at least 2 nodes".into()));
    }
    let grid = ChebyshevLobatto::new(curve.ncols())?;
    CurveDiscretization::new(grid, rule.clone()).energy(curve, metric, theta)
}
