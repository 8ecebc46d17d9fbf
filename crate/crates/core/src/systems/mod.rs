//! Control-affine systems with parametric uncertainty
//!
//! ```text
//! ẋ = f(x) − ϱ(x)ᵀθ_em + B(x)[u − φ(x)ᵀθ_m]
//! ```
//!
//! `φ(x)` is `p_m × m` (column `i` multiplies input channel `i`) and `ϱ(x)` is
//! `p_em × n` (row `i` is the direction of extended-matched parameter `i`).

pub mod expression;
pub mod lopez;
pub mod matching;

pub use expression::{ExpressionSystem, ExpressionSystemSpec};
pub use lopez::{example_metric, LopezExample, LopezExampleMetric};
pub use matching::{check_matching, controllability_matrix, lie_bracket, MatchingReport, MatchingSample};

use crate::linalg;
use crate::{Error, Matrix, Result, Vector};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

pub trait UncertainSystem: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn matched_dim(&self) -> usize;
    fn extended_dim(&self) -> usize;

    /// Nominal drift `f(x)`.
    fn drift(&self, x: &Vector) -> Vector;

    /// `B(x)`, `n × m`.
    fn input_matrix(&self, x: &Vector) -> Matrix;

    /// Matched regressor `φ(x)`, `p_m × m`.
    fn matched_regressor(&self, x: &Vector) -> Matrix;

    /// Extended-matched regressor `ϱ(x)`, `p_em × n`.
    fn extended_regressor(&self, x: &Vector) -> Matrix;

    /// Indicator `𝟙 ∈ ℝᵐ` selecting the input column `b_k = B𝟙` whose Lie
    /// bracket with `f` spans the extended-matched uncertainty.
    fn indicator(&self) -> Vector;

    /// `∂ϱᵢ/∂x₁` for every extended-matched parameter. The default
    /// differentiates the first component of each row numerically.
    fn extended_regressor_dx1(&self, x: &Vector) -> Vector {
        let h = linalg::fd_step(x);
        let mut xp = x.clone();
        xp[0] = x[0] + h;
        let rp = self.extended_regressor(&xp);
        xp[0] = x[0] - h;
        let rm = self.extended_regressor(&xp);
        Vector::from_iterator(self.extended_dim(), (0..self.extended_dim()).map(|i| (rp[(i, 0)] - rm[(i, 0)]) / (2.0 * h)))
    }

    /// `∂f/∂x`; central differences unless overridden.
    fn drift_jacobian(&self, x: &Vector) -> Matrix {
        linalg::fd_jacobian(|z| self.drift(z), x)
    }

    /// `∂bᵢ/∂x`; central differences unless overridden.
    fn input_column_jacobian(&self, x: &Vector, i: usize) -> Matrix {
        linalg::fd_jacobian(|z| self.input_matrix(z).column(i).into_owned(), x)
    }

    /// Jacobian of the uncertain drift `f − ϱᵀθ_em − Bφᵀθ_m`.
    fn uncertain_drift_jacobian(&self, x: &Vector, theta_m: &Vector, theta_em: &Vector) -> Matrix {
        linalg::fd_jacobian(|z| self.uncertain_drift(z, theta_m, theta_em), x)
    }

    /// `f(x) − ϱ(x)ᵀθ_em − B(x)φ(x)ᵀθ_m`.
    fn uncertain_drift(&self, x: &Vector, theta_m: &Vector, theta_em: &Vector) -> Vector {
        let mut out = self.drift(x);
        if self.extended_dim() > 0 {
            out -= self.extended_regressor(x).transpose() * theta_em;
        }
        if self.matched_dim() > 0 {
            out -= self.input_matrix(x) * (self.matched_regressor(x).transpose() * theta_m);
        }
        out
    }

    /// `ẋ = f(x) − ϱ(x)ᵀθ_em + B(x)[u − φ(x)ᵀθ_m]`.
    fn dynamics(&self, x: &Vector, u: &Vector, theta_m: &Vector, theta_em: &Vector) -> Vector {
        self.uncertain_drift(x, theta_m, theta_em) + self.input_matrix(x) * u
    }

    /// `b_k = B(x)𝟙`.
    fn indicated_column(&self, x: &Vector) -> Vector {
        self.input_matrix(x) * self.indicator()
    }
}

/// An uncertain system together with its true parameters.
#[derive(Clone)]
pub struct SystemModel {
    pub name: String,
    system: Arc<dyn UncertainSystem>,
    pub theta_true_m: Vector,
    pub theta_true_em: Vector,
}

impl std::fmt::Debug for SystemModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SystemModel")
            .field("name", &self.name)
            .field("n", &self.system.state_dim())
            .field("m", &self.system.input_dim())
            .field("theta_true_m", &self.theta_true_m.as_slice())
            .field("theta_true_em", &self.theta_true_em.as_slice())
            .finish()
    }
}

impl SystemModel {
    pub fn new(
        name: impl Into<String>,
        system: Arc<dyn UncertainSystem>,
        theta_true_m: Vector,
        theta_true_em: Vector,
    ) -> Result<Self> {
        linalg::check_len("true matched parameters", &theta_true_m, system.matched_dim())?;
        linalg::check_len("true extended-matched parameters", &theta_true_em, system.extended_dim())?;
        linalg::check_len("indicator", &system.indicator(), system.input_dim())?;
        Ok(Self {
            name: name.into(),
            system,
            theta_true_m,
            theta_true_em,
        })
    }

    pub fn system(&self) -> &dyn UncertainSystem {
        self.system.as_ref()
    }

    pub fn shared(&self) -> Arc<dyn UncertainSystem> {
        Arc::clone(&self.system)
    }

    /// Dynamics under the true parameters.
    pub fn true_dynamics(&self, x: &Vector, u: &Vector) -> Vector {
        self.system.dynamics(x, u, &self.theta_true_m, &self.theta_true_em)
    }
}

/// Free-function form of [`UncertainSystem::dynamics`].
pub fn dynamics(system: &dyn UncertainSystem, x: &Vector, u: &Vector, theta_m: &Vector, theta_em: &Vector) -> Vector {
    system.dynamics(x, u, theta_m, theta_em)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Setpoint {
    pub x_d: Vector,
    pub u_d: Vector,
    pub x_d_dot: Vector,
}

impl Setpoint {
    pub fn origin(n: usize, m: usize) -> Self {
        Self {
            x_d: Vector::zeros(n),
            u_d: Vector::zeros(m),
            x_d_dot: Vector::zeros(n),
        }
    }

    pub fn validate(&self, system: &dyn UncertainSystem) -> Result<()> {
        linalg::check_len("setpoint x_d", &self.x_d, system.state_dim())?;
        linalg::check_len("setpoint u_d", &self.u_d, system.input_dim())?;
        linalg::check_len("setpoint x_d_dot", &self.x_d_dot, system.state_dim())?;
        if self.x_d.iter().chain(self.u_d.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("setpoint must be finite".into()));
        }
        Ok(())
    }
}
