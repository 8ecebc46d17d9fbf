//! Geodesic-based adaptive feedback.
//!
//! Every control cycle solves for the minimizing geodesic from the setpoint
//! `x_d` (at `s = 0`) to the state `x` (at `s = 1`) under `M(·, θ̂_em)`, then
//! assembles
//!
//! ```text
//! u = u_d + u_ccm + 𝟙 Σᵢ θ̂̇_em,ᵢ ∫ rᵢ(γ)·γ_s ds + φ(x)ᵀθ̂_m + u_R
//! ```
//!
//! where `u_ccm` is the pointwise min-norm solution of the energy-decrease
//! constraint `Ė ≤ −2λE` and `u_R` the optional robust term.

use crate::geometry::{
    first_variation_terms, metric_params, CurveDiscretization, Geodesic, GeodesicSolver, MetricField, SolverSettings,
};
use crate::linalg::check_len;
use crate::systems::{Setpoint, UncertainSystem};
use crate::{Error, Result, Vector};
use serde::{Deserialize, Serialize};

/// Below this norm the constraint normal is treated as zero.
pub const DEGENERATE_NORMAL: f64 = 1e-12;
/// Distance outside the parameter bounds tolerated before projection
/// reports an upstream integration bug.
pub const BOUNDS_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeadzoneNorm {
    /// `‖γ_s(1)‖₂`
    #[default]
    Euclidean,
    /// `√(γ_s(1)ᵀ M(x) γ_s(1))`
    Metric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    /// Contraction rate `λ`.
    pub lambda: f64,
    /// Diagonal of `Γ_m`.
    pub gamma_m: Vec<f64>,
    /// Diagonal of `Γ_em`.
    pub gamma_em: Vec<f64>,
    pub kappa: f64,
    pub adapt_m: bool,
    pub adapt_em: bool,
    pub robust: bool,
    pub deadzone: bool,
    /// Deadzone radius `Φ`.
    pub deadzone_radius: f64,
    pub deadzone_norm: DeadzoneNorm,
    pub projection: bool,
    /// `[lower, upper]` per matched parameter.
    pub bounds_m: Vec<[f64; 2]>,
    /// `[lower, upper]` per extended-matched parameter.
    pub bounds_em: Vec<[f64; 2]>,
    pub solver: SolverSettings,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            gamma_m: vec![],
            gamma_em: vec![],
            kappa: 1.0,
            adapt_m: false,
            adapt_em: false,
            robust: false,
            deadzone: false,
            deadzone_radius: 0.0,
            deadzone_norm: DeadzoneNorm::default(),
            projection: false,
            bounds_m: vec![],
            bounds_em: vec![],
            solver: SolverSettings::default(),
        }
    }
}

fn check_bounds(what: &str, bounds: &[[f64; 2]], p: usize) -> Result<()> {
    if bounds.len() != p {
        return Err(Error::Dimension(format!("{what} has {} intervals, expected {p}", bounds.len())));
    }
    for (i, [lo, hi]) in bounds.iter().enumerate() {
        if lo.partial_cmp(hi).is_none_or(|o| o.is_gt()) {
            return Err(Error::InvalidArgument(format!("{what}[{i}]: lower bound {lo} exceeds upper bound {hi}")));
        }
    }
    Ok(())
}

fn check_gains(what: &str, gains: &[f64], p: usize) -> Result<()> {
    if gains.len() != p {
        return Err(Error::Dimension(format!("{what} has {} entries, expected {p}", gains.len())));
    }
    if let Some(g) = gains.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
        return Err(Error::InvalidArgument(format!("{what} entries must be positive, got {g}")));
    }
    Ok(())
}

impl ControllerConfig {
    /// Check the configuration against the system dimensions.
    pub fn validate(&self, system: &dyn UncertainSystem) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.adapt_m {
            check_gains("gamma_m", &self.gamma_m, system.matched_dim())?;
        }
        if self.adapt_em {
            check_gains("gamma_em", &self.gamma_em, system.extended_dim())?;
        }
        if self.robust && !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::InvalidArgument(format!("kappa must be positive, got {}", self.kappa)));
        }
        if !(self.deadzone_radius >= 0.0 && self.deadzone_radius.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "deadzone_radius must be non-negative, got {}",
                self.deadzone_radius
            )));
        }
        if self.projection || !self.bounds_m.is_empty() {
            check_bounds("bounds_m", &self.bounds_m, system.matched_dim())?;
        }
        if self.projection || !self.bounds_em.is_empty() {
            check_bounds("bounds_em", &self.bounds_em, system.extended_dim())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveState {
    pub t: f64,
    pub x: Vector,
    pub theta_m: Vector,
    pub theta_em: Vector,
}

impl AdaptiveState {
    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self
                .x
                .iter()
                .chain(self.theta_m.iter())
                .chain(self.theta_em.iter())
                .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlOutput {
    /// Total input.
    pub u: Vector,
    pub u_ccm: Vector,
    pub u_feedforward: Vector,
    pub u_robust: Vector,
    pub theta_dot_m: Vector,
    pub theta_dot_em: Vector,
    pub energy: f64,
    /// `aᵀu_ccm − b`; non-positive when the constraint is met.
    pub constraint_slack: f64,
    /// Deadzone measure of `γ_s(1)`.
    pub error_measure: f64,
    pub in_deadzone: bool,
    pub geodesic_converged: bool,
    pub geodesic_iterations: usize,
}

/// `min uᵀu` subject to `aᵀu ≤ b`, in closed form. Returns the minimizer and
/// the slack `aᵀu − b`.
pub fn min_norm_solve(a: &Vector, b: f64) -> Result<(Vector, f64)> {
    if b >= 0.0 {
        return Ok((Vector::zeros(a.len()), -b));
    }
    let aa = a.norm_squared();
    if a.norm() <= DEGENERATE_NORMAL {
        return Err(Error::InfeasibleConstraint { a_norm: a.norm(), b });
    }
    let u = a * (b / aa);
    let slack = a.dot(&u) - b;
    Ok((u, slack))
}

/// Constraint data `(a, b)` of the energy-decrease condition
/// `2γ_s(1)ᵀM₁(f − ϱᵀθ̂_em + B(u_d + u)) − 2γ_s(0)ᵀM₀ẋ_d ≤ −2λE`.
pub fn energy_constraint(
    geo: &Geodesic,
    metric: &dyn MetricField,
    theta_em: &Vector,
    system: &dyn UncertainSystem,
    setpoint: &Setpoint,
    lambda: f64,
) -> Result<(Vector, f64)> {
    let th = metric_params(metric, theta_em);
    let (m1g1, m0g0) = first_variation_terms(geo, metric, &th)?;
    let x = geo.end();
    let b_mat = system.input_matrix(&x);
    let a = b_mat.transpose() * &m1g1 * 2.0;
    let nominal = system.uncertain_drift(&x, &Vector::zeros(system.matched_dim()), theta_em) + &b_mat * &setpoint.u_d;
    let b = -2.0 * lambda * geo.energy - 2.0 * m1g1.dot(&nominal) + 2.0 * m0g0.dot(&setpoint.x_d_dot);
    Ok((a, b))
}

/// Pointwise min-norm feedback and the constraint slack at the solution.
pub fn min_norm_input(
    geo: &Geodesic,
    metric: &dyn MetricField,
    theta_em: &Vector,
    system: &dyn UncertainSystem,
    setpoint: &Setpoint,
    lambda: f64,
) -> Result<(Vector, f64)> {
    let (a, b) = energy_constraint(geo, metric, theta_em, system, setpoint, lambda)?;
    min_norm_solve(&a, b)
}

fn endpoint_covector(geo: &Geodesic, metric: &dyn MetricField, theta_em: &Vector) -> Result<Vector> {
    let th = metric_params(metric, theta_em);
    Ok(metric.metric(&geo.end(), &th)? * &geo.tangent1)
}

/// `θ̂̇_m = −Γ_m φ(x) B(x)ᵀ M(x, θ̂_em) γ_s(1)`.
pub fn adapt_matched(
    geo: &Geodesic,
    metric: &dyn MetricField,
    theta_em: &Vector,
    system: &dyn UncertainSystem,
    gamma_m: &[f64],
) -> Result<Vector> {
    let x = geo.end();
    let mg = endpoint_covector(geo, metric, theta_em)?;
    let raw = system.matched_regressor(&x) * (system.input_matrix(&x).transpose() * mg);
    check_len("gamma_m", &Vector::from_column_slice(gamma_m), raw.len())?;
    Ok(-raw.component_mul(&Vector::from_column_slice(gamma_m)))
}

/// `θ̂̇_em = −Γ_em ϱ(x) M(x, θ̂_em) γ_s(1)`.
pub fn adapt_extended(
    geo: &Geodesic,
    metric: &dyn MetricField,
    theta_em: &Vector,
    system: &dyn UncertainSystem,
    gamma_em: &[f64],
) -> Result<Vector> {
    let x = geo.end();
    let mg = endpoint_covector(geo, metric, theta_em)?;
    let raw = system.extended_regressor(&x) * mg;
    check_len("gamma_em", &Vector::from_column_slice(gamma_em), raw.len())?;
    Ok(-raw.component_mul(&Vector::from_column_slice(gamma_em)))
}

/// Per-channel `u_R,i = −κ bᵢᵀ M γ_s(1) ‖φᵢ‖²` with `φᵢ` the `i`-th column
/// of `φ(x)`.
pub fn robust_term(
    geo: &Geodesic,
    metric: &dyn MetricField,
    theta_em: &Vector,
    system: &dyn UncertainSystem,
    kappa: f64,
) -> Result<Vector> {
    let x = geo.end();
    let mg = endpoint_covector(geo, metric, theta_em)?;
    let b = system.input_matrix(&x);
    let phi = system.matched_regressor(&x);
    Ok(Vector::from_iterator(
        system.input_dim(),
        (0..system.input_dim()).map(|i| -kappa * b.column(i).dot(&mg) * phi.column(i).norm_squared()),
    ))
}

/// `K = m / (2κ)`, the gain on `‖θ̃_∞‖²` in the robust energy bound.
pub fn robust_bound_constant(input_dim: usize, kappa: f64) -> f64 {
    input_dim as f64 / (2.0 * kappa)
}

/// `𝟙 Σᵢ θ̂̇_em,ᵢ ∫₀¹ rᵢ(γ(s))·γ_s(s) ds` with `rᵢ = (∂ϱᵢ/∂x₁, 0, …, 0)`.
pub fn extended_feedforward(
    geo: &Geodesic,
    theta_dot_em: &Vector,
    system: &dyn UncertainSystem,
    disc: &CurveDiscretization,
) -> Vector {
    let m = system.input_dim();
    if theta_dot_em.iter().all(|v| *v == 0.0) {
        return Vector::zeros(m);
    }
    let n = system.state_dim();
    let total: f64 = (0..theta_dot_em.len())
        .filter(|&i| theta_dot_em[i] != 0.0)
        .map(|i| {
            let integral = disc.line_integral(&geo.nodes, |z| {
                let mut r = Vector::zeros(n);
                r[0] = system.extended_regressor_dx1(z)[i];
                r
            });
            theta_dot_em[i] * integral
        })
        .sum();
    system.indicator() * total
}

impl DeadzoneNorm {
    pub fn measure(self, gamma_s1: &Vector, metric_at_x: &crate::Matrix) -> f64 {
        match self {
            DeadzoneNorm::Euclidean => gamma_s1.norm(),
            DeadzoneNorm::Metric => gamma_s1.dot(&(metric_at_x * gamma_s1)).max(0.0).sqrt(),
        }
    }
}

/// Zero both rates when `‖γ_s(1)‖ ≤ Φ` (boundary inclusive).
pub fn apply_deadzone(theta_dot_m: &Vector, theta_dot_em: &Vector, gamma_s1: &Vector, radius: f64) -> (Vector, Vector) {
    apply_deadzone_measure(theta_dot_m, theta_dot_em, gamma_s1.norm(), radius)
}

/// [`apply_deadzone`] with a precomputed error measure.
pub fn apply_deadzone_measure(theta_dot_m: &Vector, theta_dot_em: &Vector, measure: f64, radius: f64) -> (Vector, Vector) {
    if measure <= radius {
        (Vector::zeros(theta_dot_m.len()), Vector::zeros(theta_dot_em.len()))
    } else {
        (theta_dot_m.clone(), theta_dot_em.clone())
    }
}

/// Zero each rate that would push its estimate through an active bound.
pub fn apply_projection(theta: &Vector, theta_dot: &Vector, bounds: &[[f64; 2]]) -> Result<Vector> {
    check_len("parameter rates", theta_dot, theta.len())?;
    if bounds.len() != theta.len() {
        return Err(Error::Dimension(format!(
            "{} parameter bounds for {} parameters",
            bounds.len(),
            theta.len()
        )));
    }
    let mut out = theta_dot.clone();
    for (i, &[lo, hi]) in bounds.iter().enumerate() {
        let t = theta[i];
        if t < lo - BOUNDS_SLACK || t > hi + BOUNDS_SLACK || !t.is_finite() {
            return Err(Error::InvariantViolation(format!(
                "estimate {i} = {t} lies outside [{lo}, {hi}]"
            )));
        }
        if (t >= hi && out[i] > 0.0) || (t <= lo && out[i] < 0.0) {
            out[i] = 0.0;
        }
    }
    Ok(out)
}

/// Clamp estimates into their bounds (used after each integration substep
/// when projection is active).
pub fn clamp_to_bounds(theta: &mut Vector, bounds: &[[f64; 2]]) {
    for (i, &[lo, hi]) in bounds.iter().enumerate() {
        theta[i] = theta[i].clamp(lo, hi);
    }
}

/// One evaluation of the combined adaptive law. `previous` is the geodesic of
/// the last control cycle (warm start); the new geodesic is returned so the
/// caller can keep it.
pub fn combined_step(
    state: &AdaptiveState,
    config: &ControllerConfig,
    system: &dyn UncertainSystem,
    metric: &dyn MetricField,
    setpoint: &Setpoint,
    solver: &GeodesicSolver,
    previous: Option<&Geodesic>,
) -> Result<(ControlOutput, Geodesic)> {
    if !state.is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite controller state at t = {}", state.t)));
    }
    let th = metric_params(metric, &state.theta_em);
    let geo = solver.solve_or_chord(&setpoint.x_d, &state.x, metric, &th, previous)?;
    if !geo.converged {
        log::debug!(
            "t = {:.4}: geodesic not converged (|grad| = {:e}, {} iterations)",
            state.t,
            geo.gradient_norm,
            geo.iterations
        );
    }
    let m = system.input_dim();

    let mut theta_dot_em = if config.adapt_em {
        adapt_extended(&geo, metric, &state.theta_em, system, &config.gamma_em)?
    } else {
        Vector::zeros(system.extended_dim())
    };
    let mut theta_dot_m = if config.adapt_m {
        adapt_matched(&geo, metric, &state.theta_em, system, &config.gamma_m)?
    } else {
        Vector::zeros(system.matched_dim())
    };

    let m1 = metric.metric(&state.x, &th)?;
    let error_measure = config.deadzone_norm.measure(&geo.tangent1, &m1);
    let in_deadzone = config.deadzone && error_measure <= config.deadzone_radius;
    if in_deadzone {
        (theta_dot_m, theta_dot_em) =
            apply_deadzone_measure(&theta_dot_m, &theta_dot_em, error_measure, config.deadzone_radius);
    }
    if config.projection {
        theta_dot_m = apply_projection(&state.theta_m, &theta_dot_m, &config.bounds_m)?;
        theta_dot_em = apply_projection(&state.theta_em, &theta_dot_em, &config.bounds_em)?;
    }

    let (u_ccm, constraint_slack) = min_norm_input(&geo, metric, &state.theta_em, system, setpoint, config.lambda)?;
    let u_feedforward = extended_feedforward(&geo, &theta_dot_em, system, solver.discretization());
    let u_robust = if config.robust {
        robust_term(&geo, metric, &state.theta_em, system, config.kappa)?
    } else {
        Vector::zeros(m)
    };
    let certainty_equivalence = if system.matched_dim() > 0 {
        system.matched_regressor(&state.x).transpose() * &state.theta_m
    } else {
        Vector::zeros(m)
    };
    let u = &setpoint.u_d + &u_ccm + &u_feedforward + certainty_equivalence + &u_robust;

    let out = ControlOutput {
        u,
        u_ccm,
        u_feedforward,
        u_robust,
        theta_dot_m,
        theta_dot_em,
        energy: geo.energy,
        constraint_slack,
        error_measure,
        in_deadzone,
        geodesic_converged: geo.converged,
        geodesic_iterations: geo.iterations,
    };
    Ok((out, geo))
}

/// Stateful wrapper around [`combined_step`] that owns the solver and the
/// warm-start cache.
#[derive(Debug, Clone)]
pub struct AdaptiveController {
    config: ControllerConfig,
    solver: GeodesicSolver,
    previous: Option<Geodesic>,
}

impl AdaptiveController {
    pub fn new(config: ControllerConfig) -> Result<Self> {
        let solver = GeodesicSolver::new(config.solver)?;
        Ok(Self {
            config,
            solver,
            previous: None,
        })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn solver(&self) -> &GeodesicSolver {
        &self.solver
    }

    pub fn last_geodesic(&self) -> Option<&Geodesic> {
        self.previous.as_ref()
    }

    pub fn reset(&mut self) {
        self.previous = None;
    }

    pub fn step(
        &mut self,
        state: &AdaptiveState,
        system: &dyn UncertainSystem,
        metric: &dyn MetricField,
        setpoint: &Setpoint,
    ) -> Result<ControlOutput> {
        let (out, geo) = combined_step(
            state,
            &self.config,
            system,
            metric,
            setpoint,
            &self.solver,
            self.previous.as_ref(),
        )?;
        self.previous = Some(geo);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{LopezExample, LopezExampleMetric};
    use approx::assert_relative_eq;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    #[test]
    fn closed_form_half_space_projection() {
        let (u, slack) = min_norm_solve(&v(&[0.0, 0.0, 2.0]), -4.0).unwrap();
        assert_eq!(u, v(&[0.0, 0.0, -2.0]));
        assert_eq!(slack, 0.0);
        let (u, slack) = min_norm_solve(&v(&[1.0, 1.0, 0.0]), 3.0).unwrap();
        assert_eq!(u, Vector::zeros(3));
        assert_eq!(slack, -3.0);
        assert!(matches!(
            min_norm_solve(&Vector::zeros(2), -1.0),
            Err(Error::InfeasibleConstraint { .. })
        ));
        assert_eq!(min_norm_solve(&Vector::zeros(2), 0.0).unwrap().0, Vector::zeros(2));
    }

    #[test]
    fn deadzone_boundary_is_inclusive() {
        let rm = v(&[1.0, -2.0]);
        let re = v(&[3.0]);
        let g = v(&[0.3, 0.4, 0.0]);
        let (a, b) = apply_deadzone(&rm, &re, &g, 0.5);
        assert_eq!((a, b), (Vector::zeros(2), Vector::zeros(1)));
        assert_eq!(apply_deadzone(&rm, &re, &g, 0.0), (rm.clone(), re.clone()));
        assert_eq!(apply_deadzone(&rm, &re, &g, 0.25), (rm, re));
    }

    #[test]
    fn projection_cases() {
        let b = [[-2.0, 2.0]];
        assert_eq!(apply_projection(&v(&[2.0]), &v(&[1.0]), &b).unwrap(), v(&[0.0]));
        assert_eq!(apply_projection(&v(&[2.0]), &v(&[-1.0]), &b).unwrap(), v(&[-1.0]));
        assert_eq!(apply_projection(&v(&[-2.0]), &v(&[-1.0]), &b).unwrap(), v(&[0.0]));
        assert_eq!(apply_projection(&v(&[0.3]), &v(&[5.0]), &b).unwrap(), v(&[5.0]));
        assert!(matches!(
            apply_projection(&v(&[2.1]), &v(&[0.0]), &b),
            Err(Error::InvariantViolation(_))
        ));
    }

    #[test]
    fn robust_constant() {
        assert_eq!(robust_bound_constant(1, 2.0), 0.25);
    }

    #[test]
    fn at_the_setpoint_only_certainty_equivalence_survives() {
        let config = ControllerConfig {
            lambda: 0.5,
            gamma_m: vec![1.0, 1.0],
            gamma_em: vec![1.0],
            adapt_m: true,
            adapt_em: true,
            robust: true,
            ..ControllerConfig::default()
        };
        let mut ctl = AdaptiveController::new(config).unwrap();
        let xd = v(&[0.5, 0.25, 0.0]);
        let setpoint = Setpoint {
            x_d: xd.clone(),
            u_d: v(&[0.1]),
            x_d_dot: Vector::zeros(3),
        };
        let state = AdaptiveState {
            t: 0.0,
            x: xd.clone(),
            theta_m: v(&[0.0, -0.5]),
            theta_em: v(&[1.0]),
        };
        let out = ctl.step(&state, &LopezExample, &LopezExampleMetric, &setpoint).unwrap();
        assert_eq!(out.energy, 0.0);
        assert_eq!(out.u_ccm, Vector::zeros(1));
        assert_eq!(out.theta_dot_m, Vector::zeros(2));
        assert_eq!(out.theta_dot_em, Vector::zeros(1));
        // u_d + φ(x_d)ᵀθ̂_m = 0.1 + (0·0 + 0.25·(−0.5))
        assert_relative_eq!(out.u[0], 0.1 - 0.125, epsilon = 1e-15);
    }
}
