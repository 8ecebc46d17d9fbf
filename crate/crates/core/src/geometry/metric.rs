//! Parameter-dependent Riemannian metrics, specified through their dual
//! `W(x, θ) = M(x, θ)⁻¹`.

use crate::expr::Expr;
use crate::linalg::{self, symmetrize};
use crate::{Error, Matrix, Result, Vector};

/// A dual metric field `W(x, θ)` on `ℝⁿ` with `p` parameters.
///
/// Derivatives default to central finite differences; closed-form metrics
/// should override them.
pub trait MetricField: Send + Sync {
    fn dim(&self) -> usize;

    fn param_dim(&self) -> usize;

    /// Symmetric positive definite `W(x, θ)`.
    fn dual(&self, x: &Vector, theta: &Vector) -> Matrix;

    /// `∂W/∂xᵢ` for `i = 1..n`.
    fn dual_dx(&self, x: &Vector, theta: &Vector) -> Vec<Matrix> {
        let h = linalg::fd_step(x);
        let mut xp = x.clone();
        (0..x.len())
            .map(|i| {
                xp[i] = x[i] + h;
                let wp = self.dual(&xp, theta);
                xp[i] = x[i] - h;
                let wm = self.dual(&xp, theta);
                xp[i] = x[i];
                (wp - wm) / (2.0 * h)
            })
            .collect()
    }

    /// `∂W/∂θᵢ` for `i = 1..p`.
    fn dual_dtheta(&self, x: &Vector, theta: &Vector) -> Vec<Matrix> {
        let h = linalg::fd_step(theta);
        let mut tp = theta.clone();
        (0..theta.len())
            .map(|i| {
                tp[i] = theta[i] + h;
                let wp = self.dual(x, &tp);
                tp[i] = theta[i] - h;
                let wm = self.dual(x, &tp);
                tp[i] = theta[i];
                (wp - wm) / (2.0 * h)
            })
            .collect()
    }

    /// Uniform eigenvalue bounds `(w_lower, w_upper)` of `W` on the region of
    /// interest.
    fn bounds(&self) -> (f64, f64);

    /// `M = W⁻¹`, or a metric error if `W` is not positive definite.
    fn metric(&self, x: &Vector, theta: &Vector) -> Result<Matrix> {
        let w = self.dual(x, theta);
        linalg::spd_inverse(&w)
            .ok_or_else(|| Error::metric(x.as_slice(), theta.as_slice(), "dual metric is not positive definite"))
    }

    /// `∂M/∂θᵢ = -M (∂W/∂θᵢ) M`.
    fn metric_dtheta(&self, x: &Vector, theta: &Vector) -> Result<Vec<Matrix>> {
        let m = self.metric(x, theta)?;
        Ok(self
            .dual_dtheta(x, theta)
            .iter()
            .map(|dw| symmetrize(&(-(&m * dw * &m))))
            .collect())
    }

    /// `∂M/∂xᵢ = -M (∂W/∂xᵢ) M`.
    fn metric_dx(&self, x: &Vector, theta: &Vector) -> Result<Vec<Matrix>> {
        let m = self.metric(x, theta)?;
        Ok(self
            .dual_dx(x, theta)
            .iter()
            .map(|dw| symmetrize(&(-(&m * dw * &m))))
            .collect())
    }
}

/// Parameters passed to `metric` when the estimate vector is `theta`: the
/// estimate itself for a parameter-dependent metric, nothing otherwise.
pub fn metric_params(metric: &dyn MetricField, theta: &Vector) -> Vector {
    if metric.param_dim() == 0 {
        Vector::zeros(0)
    } else {
        theta.clone()
    }
}

/// Constant dual metric, optionally carrying (ignored) parameters so it can
/// stand in for a parameter-dependent one.
#[derive(Debug, Clone)]
pub struct ConstantMetric {
    dual: Matrix,
    param_dim: usize,
    bounds: (f64, f64),
}

impl ConstantMetric {
    pub fn new(dual: Matrix, param_dim: usize) -> Result<Self> {
        if !dual.is_square() {
            return Err(Error::Dimension("constant dual metric must be square".into()));
        }
        let dual = symmetrize(&dual);
        let (lo, hi) = linalg::sym_eigen_range(&dual);
        if lo <= 0.0 || !lo.is_finite() {
            return Err(Error::InvalidArgument("constant dual metric must be positive definite".into()));
        }
        Ok(Self {
            dual,
            param_dim,
            bounds: (lo, hi),
        })
    }

    pub fn identity(dim: usize, param_dim: usize) -> Self {
        Self {
            dual: Matrix::identity(dim, dim),
            param_dim,
            bounds: (1.0, 1.0),
        }
    }
}

impl MetricField for ConstantMetric {
    fn dim(&self) -> usize {
        self.dual.nrows()
    }

    fn param_dim(&self) -> usize {
        self.param_dim
    }

    fn dual(&self, _x: &Vector, _theta: &Vector) -> Matrix {
        self.dual.clone()
    }

    fn dual_dx(&self, _x: &Vector, _theta: &Vector) -> Vec<Matrix> {
        let n = self.dim();
        vec![Matrix::zeros(n, n); n]
    }

    fn dual_dtheta(&self, _x: &Vector, _theta: &Vector) -> Vec<Matrix> {
        let n = self.dim();
        vec![Matrix::zeros(n, n); self.param_dim]
    }

    fn bounds(&self) -> (f64, f64) {
        self.bounds
    }
}

/// Dual metric whose entries are expressions in `x1..xn` and
/// `theta1..thetap`. Only the upper triangle is read; the lower triangle
/// mirrors it.
#[derive(Debug, Clone)]
pub struct ExpressionMetric {
    dim: usize,
    param_dim: usize,
    upper: Vec<Vec<Expr>>,
    bounds: (f64, f64),
}

impl ExpressionMetric {
    pub fn variable_names(dim: usize, param_dim: usize) -> Vec<String> {
        (1..=dim)
            .map(|i| format!("x{i}"))
            .chain((1..=param_dim).map(|i| format!("theta{i}")))
            .collect()
    }

    pub fn parse(entries: &[Vec<String>], param_dim: usize, bounds: (f64, f64)) -> Result<Self> {
        let dim = entries.len();
        if dim == 0 || entries.iter().any(|row| row.len() != dim) {
            return Err(Error::Dimension("metric expression matrix must be square and non-empty".into()));
        }
        if !(bounds.0 > 0.0 && bounds.0 <= bounds.1) {
            return Err(Error::InvalidArgument(format!(
                "metric bounds must satisfy 0 < w_lower <= w_upper, got {bounds:?}"
            )));
        }
        let names = Self::variable_names(dim, param_dim);
        let vars: Vec<&str> = names.iter().map(String::as_str).collect();
        let mut upper = Vec::with_capacity(dim);
        for (i, row) in entries.iter().enumerate() {
            let parsed = row[i..]
                .iter()
                .map(|src| Expr::parse(src, &vars))
                .collect::<Result<Vec<_>>>()?;
            upper.push(parsed);
        }
        Ok(Self {
            dim,
            param_dim,
            upper,
            bounds,
        })
    }
}

impl MetricField for ExpressionMetric {
    fn dim(&self) -> usize {
        self.dim
    }

    fn param_dim(&self) -> usize {
        self.param_dim
    }

    fn dual(&self, x: &Vector, theta: &Vector) -> Matrix {
        let vals: Vec<f64> = x.iter().chain(theta.iter()).copied().collect();
        let mut w = Matrix::zeros(self.dim, self.dim);
        for (i, row) in self.upper.iter().enumerate() {
            for (k, e) in row.iter().enumerate() {
                let j = i + k;
                let v = e.eval(&vals);
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
        w
    }

    fn bounds(&self) -> (f64, f64) {
        self.bounds
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn expression_metric_mirrors_upper_triangle() {
        let entries = vec![
            vec!["2 + x1^2".to_string(), "theta1".to_string()],
            vec!["ignored".to_string(), "3".to_string()],
        ];
        let m = ExpressionMetric::parse(&entries, 1, (0.5, 10.0)).unwrap();
        let w = m.dual(&Vector::from_vec(vec![1.0, 0.0]), &Vector::from_vec(vec![0.25]));
        assert_eq!(w, Matrix::from_row_slice(2, 2, &[3.0, 0.25, 0.25, 3.0]));
    }

    #[test]
    fn inverse_rule_matches_finite_differences() {
        let entries = vec![
            vec!["2 + x1^2".to_string(), "theta1 * x2".to_string()],
            vec![String::new(), "3 + theta1^2".to_string()],
        ];
        let m = ExpressionMetric::parse(&entries, 1, (0.5, 10.0)).unwrap();
        let x = Vector::from_vec(vec![0.3, -0.7]);
        let th = Vector::from_vec(vec![0.4]);
        let dm = m.metric_dtheta(&x, &th).unwrap();
        let h = 1e-6;
        let mp = m.metric(&x, &Vector::from_vec(vec![0.4 + h])).unwrap();
        let mm = m.metric(&x, &Vector::from_vec(vec![0.4 - h])).unwrap();
        assert_relative_eq!(dm[0], (mp - mm) / (2.0 * h), epsilon = 1e-8);
    }

    #[test]
    fn non_pd_dual_is_a_metric_error() {
        let c = ConstantMetric::identity(2, 0);
        assert!(c.metric(&Vector::zeros(2), &Vector::zeros(0)).is_ok());
        assert!(ConstantMetric::new(Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]), 0).is_err());
    }
}
