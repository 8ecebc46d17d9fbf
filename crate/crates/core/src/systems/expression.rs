//! Systems defined by expression strings in `x1..xn`.

use super::UncertainSystem;
use crate::expr::Expr;
use crate::{Error, Matrix, Result, Vector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpressionSystemSpec {
    /// `f(x)`, one expression per state.
    pub drift: Vec<String>,
    /// `B(x)` as `n` rows of `m` expressions.
    pub input_matrix: Vec<Vec<String>>,
    /// `φ(x)` as `p_m` rows of `m` expressions.
    #[serde(default)]
    pub matched_regressor: Vec<Vec<String>>,
    /// `ϱ(x)` as `p_em` rows of `n` expressions.
    #[serde(default)]
    pub extended_regressor: Vec<Vec<String>>,
    /// Optional closed forms of `∂ϱᵢ/∂x₁`; numerical otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extended_regressor_dx1: Option<Vec<String>>,
    /// `𝟙`, length `m`.
    pub indicator: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ExpressionSystem {
    n: usize,
    m: usize,
    drift: Vec<Expr>,
    input: Vec<Vec<Expr>>,
    matched: Vec<Vec<Expr>>,
    extended: Vec<Vec<Expr>>,
    extended_dx1: Option<Vec<Expr>>,
    indicator: Vector,
}

fn parse_rows(what: &str, rows: &[Vec<String>], width: usize, vars: &[&str]) -> Result<Vec<Vec<Expr>>> {
    rows.iter()
        .enumerate()
        .map(|(r, row)| {
            if row.len() != width {
                return Err(Error::Dimension(format!(
                    "{what} row {} has {} entries, expected {width}",
                    r + 1,
                    row.len()
                )));
            }
            row.iter().map(|s| Expr::parse(s, vars)).collect()
        })
        .collect()
}

fn eval_rows(rows: &[Vec<Expr>], cols: usize, x: &Vector) -> Matrix {
    let vals = x.as_slice();
    Matrix::from_fn(rows.len(), cols, |i, j| rows[i][j].eval(vals))
}

impl ExpressionSystem {
    pub fn from_spec(spec: &ExpressionSystemSpec) -> Result<Self> {
        let n = spec.drift.len();
        if n == 0 {
            return Err(Error::Dimension("system drift must have at least one state".into()));
        }
        let names: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
        let vars: Vec<&str> = names.iter().map(String::as_str).collect();
        let drift = spec
            .drift
            .iter()
            .map(|s| Expr::parse(s, &vars))
            .collect::<Result<Vec<_>>>()?;
        if spec.input_matrix.len() != n {
            return Err(Error::Dimension(format!(
                "input_matrix has {} rows, expected {n}",
                spec.input_matrix.len()
            )));
        }
        let m = spec.input_matrix.first().map_or(0, Vec::len);
        if m == 0 {
            return Err(Error::Dimension("input_matrix needs at least one column".into()));
        }
        let input = parse_rows("input_matrix", &spec.input_matrix, m, &vars)?;
        let matched = parse_rows("matched_regressor", &spec.matched_regressor, m, &vars)?;
        let extended = parse_rows("extended_regressor", &spec.extended_regressor, n, &vars)?;
        let extended_dx1 = match &spec.extended_regressor_dx1 {
            Some(list) => {
                if list.len() != extended.len() {
                    return Err(Error::Dimension(format!(
                        "extended_regressor_dx1 has {} entries, expected {}",
                        list.len(),
                        extended.len()
                    )));
                }
                Some(list.iter().map(|s| Expr::parse(s, &vars)).collect::<Result<Vec<_>>>()?)
            }
            None => None,
        };
        if spec.indicator.len() != m {
            return Err(Error::Dimension(format!(
                "indicator has {} entries, expected {m}",
                spec.indicator.len()
            )));
        }
        Ok(Self {
            n,
            m,
            drift,
            input,
            matched,
            extended,
            extended_dx1,
            indicator: Vector::from_column_slice(&spec.indicator),
        })
    }
}

impl UncertainSystem for ExpressionSystem {
    fn state_dim(&self) -> usize {
        self.n
    }

    fn input_dim(&self) -> usize {
        self.m
    }

    fn matched_dim(&self) -> usize {
        self.matched.len()
    }

    fn extended_dim(&self) -> usize {
        self.extended.len()
    }

    fn drift(&self, x: &Vector) -> Vector {
        Vector::from_iterator(self.n, self.drift.iter().map(|e| e.eval(x.as_slice())))
    }

    fn input_matrix(&self, x: &Vector) -> Matrix {
        eval_rows(&self.input, self.m, x)
    }

    fn matched_regressor(&self, x: &Vector) -> Matrix {
        eval_rows(&self.matched, self.m, x)
    }

    fn extended_regressor(&self, x: &Vector) -> Matrix {
        eval_rows(&self.extended, self.n, x)
    }

    fn indicator(&self) -> Vector {
        self.indicator.clone()
    }

    fn extended_regressor_dx1(&self, x: &Vector) -> Vector {
        match &self.extended_dx1 {
            Some(list) => Vector::from_iterator(list.len(), list.iter().map(|e| e.eval(x.as_slice()))),
            None => {
                let h = crate::linalg::fd_step(x);
                let mut xp = x.clone();
                xp[0] = x[0] + h;
                let rp = self.extended_regressor(&xp);
                xp[0] = x[0] - h;
                let rm = self.extended_regressor(&xp);
                Vector::from_iterator(self.extended.len(), (0..self.extended.len()).map(|i| (rp[(i, 0)] - rm[(i, 0)]) / (2.0 * h)))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::LopezExample;
    use approx::assert_relative_eq;

    pub(crate) fn lopez_spec() -> ExpressionSystemSpec {
        ExpressionSystemSpec {
            drift: vec!["x3".into(), "x1^2 - x2".into(), "tanh(x2)".into()],
            input_matrix: vec![vec!["0".into()], vec!["0".into()], vec!["1".into()]],
            matched_regressor: vec![vec!["x3".into()], vec!["x1^2".into()]],
            extended_regressor: vec![vec!["x1".into(), "0".into(), "0".into()]],
            extended_regressor_dx1: None,
            indicator: vec![1.0],
        }
    }

    #[test]
    fn expression_system_reproduces_builtin() {
        let sys = ExpressionSystem::from_spec(&lopez_spec()).unwrap();
        let builtin = LopezExample;
        let x = Vector::from_vec(vec![0.8, -0.3, 1.1]);
        let u = Vector::from_vec(vec![0.4]);
        let th_m = Vector::from_vec(vec![-0.5, -1.5]);
        let th_em = Vector::from_vec(vec![-1.0]);
        assert_relative_eq!(
            sys.dynamics(&x, &u, &th_m, &th_em),
            builtin.dynamics(&x, &u, &th_m, &th_em),
            epsilon = 1e-14
        );
        assert_relative_eq!(sys.extended_regressor_dx1(&x)[0], 1.0, epsilon = 1e-8);
        assert_relative_eq!(
            sys.uncertain_drift_jacobian(&x, &th_m, &th_em),
            builtin.uncertain_drift_jacobian(&x, &th_m, &th_em),
            epsilon = 1e-7
        );
    }

    #[test]
    fn dimension_errors_are_reported() {
        let mut spec = lopez_spec();
        spec.extended_regressor = vec![vec!["x1".into(), "0".into()]];
        assert!(matches!(ExpressionSystem::from_spec(&spec), Err(Error::Dimension(_))));
        let mut spec = lopez_spec();
        spec.indicator = vec![1.0, 0.0];
        assert!(ExpressionSystem::from_spec(&spec).is_err());
        let mut spec = lopez_spec();
        spec.drift[0] = "x4".into();
        assert!(matches!(ExpressionSystem::from_spec(&spec), Err(Error::Expression(_))));
    }
}
