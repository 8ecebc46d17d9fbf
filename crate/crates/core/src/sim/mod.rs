//! Fixed-step closed-loop simulation.
//!
//! The plant is integrated with classical RK4 at `dt`; the controller runs
//! every `control_period` and its input and adaptation rates are held over
//! the substeps in between. Because the rates are constant within a control
//! period, the estimate update is exact.

mod output;

pub use crate::control::AdaptiveState;
pub use output::{plot_data, write_csv, write_plot_json, write_svg, PlotData, Series};

use crate::control::{clamp_to_bounds, AdaptiveController, ControlOutput, ControllerConfig};
use crate::geometry::MetricField;
use crate::linalg::check_len;
use crate::parallel::{self, Execution};
use crate::systems::{Setpoint, SystemModel};
use crate::{Error, Result, Vector};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Horizon `T`.
    pub t_final: f64,
    pub dt: f64,
    pub control_period: f64,
    pub log_period: f64,
    /// Divergence radius on `‖x‖`; `10 (1 + ‖x₀‖)` when unset.
    pub blowup_radius: Option<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            t_final: 20.0,
            dt: 1e-3,
            control_period: 1e-2,
            log_period: 1e-2,
            blowup_radius: None,
        }
    }
}

// number of `dt` steps in `period`, which must be a whole multiple
fn steps_in(what: &str, period: f64, dt: f64) -> Result<usize> {
    let ratio = period / dt;
    let k = ratio.round();
    if k.is_nan() || k < 1.0 || (ratio - k).abs() > 1e-6 * k {
        return Err(Error::InvalidArgument(format!(
            "{what} ({period}) must be a positive whole multiple of dt ({dt})"
        )));
    }
    Ok(k as usize)
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("t_final", self.t_final),
            ("dt", self.dt),
            ("control_period", self.control_period),
            ("log_period", self.log_period),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if self.dt > self.control_period {
            return Err(Error::InvalidArgument("dt must not exceed the control period".into()));
        }
        steps_in("control_period", self.control_period, self.dt)?;
        steps_in("log_period", self.log_period, self.dt)?;
        if let Some(r) = self.blowup_radius {
            if r.is_nan() || r <= 0.0 {
                return Err(Error::InvalidArgument(format!("blowup_radius must be positive, got {r}")));
            }
        }
        Ok(())
    }

    pub fn radius_for(&self, x0: &Vector) -> f64 {
        self.blowup_radius.unwrap_or(10.0 * (1.0 + x0.norm()))
    }

    /// Expected number of log rows for a run that completes.
    pub fn expected_rows(&self) -> usize {
        (self.t_final / self.log_period + 1e-9).floor() as usize + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub t: f64,
    pub x: Vector,
    pub x_d: Vector,
    pub u: Vector,
    pub u_ccm: Vector,
    pub theta_m: Vector,
    pub theta_em: Vector,
    pub energy: f64,
    pub slack: f64,
    pub geodesic_converged: bool,
    pub geodesic_iterations: usize,
    pub error_measure: f64,
    pub in_deadzone: bool,
    pub theta_dot_m: Vector,
    pub theta_dot_em: Vector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SimStatus {
    Completed,
    /// `‖x‖` left the blow-up radius (or became non-finite) at `t`.
    Diverged { t: f64, norm: f64 },
    /// The controller failed at `t`; the log stops at the last good row.
    Failed { t: f64, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub rows: Vec<LogRow>,
    pub status: SimStatus,
}

impl TrajectoryLog {
    pub fn diverged(&self) -> bool {
        matches!(self.status, SimStatus::Diverged { .. })
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    pub fn final_row(&self) -> Option<&LogRow> {
        self.rows.last()
    }

    /// `max_t ‖x(t) − x_d‖`.
    pub fn peak_error(&self) -> f64 {
        self.rows.iter().map(|r| (&r.x - &r.x_d).norm()).fold(0.0, f64::max)
    }

    /// `max ‖x(t) − x_d‖` over rows with `t ≥ t0`.
    pub fn max_error_after(&self, t0: f64) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.t >= t0 - 1e-12)
            .map(|r| (&r.x - &r.x_d).norm())
            .fold(0.0, f64::max)
    }
}

fn row(state: &AdaptiveState, setpoint: &Setpoint, out: &ControlOutput) -> LogRow {
    LogRow {
        t: state.t,
        x: state.x.clone(),
        x_d: setpoint.x_d.clone(),
        u: out.u.clone(),
        u_ccm: out.u_ccm.clone(),
        theta_m: state.theta_m.clone(),
        theta_em: state.theta_em.clone(),
        energy: out.energy,
        slack: out.constraint_slack,
        geodesic_converged: out.geodesic_converged,
        geodesic_iterations: out.geodesic_iterations,
        error_measure: out.error_measure,
        in_deadzone: out.in_deadzone,
        theta_dot_m: out.theta_dot_m.clone(),
        theta_dot_em: out.theta_dot_em.clone(),
    }
}

fn rk4_step(model: &SystemModel, x: &Vector, u: &Vector, dt: f64) -> Vector {
    let k1 = model.true_dynamics(x, u);
    let k2 = model.true_dynamics(&(x + &k1 * (0.5 * dt)), u);
    let k3 = model.true_dynamics(&(x + &k2 * (0.5 * dt)), u);
    let k4 = model.true_dynamics(&(x + &k3 * dt), u);
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// Simulate the closed loop from `initial` (which fixes `x₀`, `θ̂₀` and the
/// start time) under the true parameters stored in `model`.
pub fn simulate(
    model: &SystemModel,
    metric: &dyn MetricField,
    controller: &ControllerConfig,
    setpoint: &Setpoint,
    initial: &AdaptiveState,
    sim: &SimConfig,
) -> Result<TrajectoryLog> {
    let system = model.system();
    sim.validate()?;
    controller.validate(system)?;
    setpoint.validate(system)?;
    check_len("x0", &initial.x, system.state_dim())?;
    check_len("initial matched estimate", &initial.theta_m, system.matched_dim())?;
    check_len("initial extended-matched estimate", &initial.theta_em, system.extended_dim())?;
    if metric.dim() != system.state_dim() {
        return Err(Error::Dimension(format!(
            "metric dimension {} != state dimension {}",
            metric.dim(),
            system.state_dim()
        )));
    }
    if metric.param_dim() != 0 && metric.param_dim() != system.extended_dim() {
        return Err(Error::Dimension(format!(
            "metric has {} parameters, system has {} extended-matched parameters",
            metric.param_dim(),
            system.extended_dim()
        )));
    }
    if !initial.is_finite() {
        return Err(Error::InvalidArgument("initial state must be finite".into()));
    }
    if controller.projection {
        crate::control::apply_projection(&initial.theta_m, &initial.theta_m, &controller.bounds_m)?;
        crate::control::apply_projection(&initial.theta_em, &initial.theta_em, &controller.bounds_em)?;
    }

    let mut ctl = AdaptiveController::new(controller.clone())?;
    let steps = (sim.t_final / sim.dt + 1e-9).floor() as usize;
    let per_control = steps_in("control_period", sim.control_period, sim.dt)?;
    let per_log = steps_in("log_period", sim.log_period, sim.dt)?;
    let radius = sim.radius_for(&initial.x);
    let t0 = initial.t;

    let mut state = initial.clone();
    let mut rows = Vec::with_capacity(steps / per_log + 2);
    let mut out: Option<ControlOutput> = None;
    let mut status = SimStatus::Completed;

    for k in 0..=steps {
        state.t = t0 + k as f64 * sim.dt;
        if k % per_control == 0 {
            match ctl.step(&state, system, metric, setpoint) {
                Ok(o) => out = Some(o),
                Err(e) => {
                    log::warn!("controller failed at t = {}: {e}", state.t);
                    status = SimStatus::Failed {
                        t: state.t,
                        message: e.to_string(),
                    };
                    break;
                }
            }
        }
        let held = out.as_ref().expect("controller runs at step 0");
        if k % per_log == 0 {
            rows.push(row(&state, setpoint, held));
        }
        if k == steps {
            break;
        }

        state.x = rk4_step(model, &state.x, &held.u, sim.dt);
        state.theta_m += &held.theta_dot_m * sim.dt;
        state.theta_em += &held.theta_dot_em * sim.dt;
        if controller.projection {
            clamp_to_bounds(&mut state.theta_m, &controller.bounds_m);
            clamp_to_bounds(&mut state.theta_em, &controller.bounds_em);
        }

        let norm = state.x.norm();
        if !norm.is_finite() || norm > radius {
            state.t = t0 + (k + 1) as f64 * sim.dt;
            log::info!("divergence detected at t = {:.3} (|x| = {norm:.3e})", state.t);
            rows.push(row(&state, setpoint, held));
            status = SimStatus::Diverged { t: state.t, norm };
            break;
        }
    }
    Ok(TrajectoryLog { rows, status })
}

/// `‖θ̃_∞‖²` with `θ̃_∞,ᵢ = θ⁺ᵢ − θ⁻ᵢ`, the width of each parameter interval.
pub fn theta_tilde_inf_sq(bounds: &[[f64; 2]]) -> f64 {
    bounds.iter().map(|[lo, hi]| (hi - lo) * (hi - lo)).sum()
}

/// `‖x(t) − x_d‖` envelope for the robust controller:
/// `R‖x₀ − x_d‖e^{−λt} + R√(K/2λ)‖θ̃_∞‖(1 − e^{−2λt})^{1/2}` with `R = √(w_up/w_lo)`.
pub fn tube_bound(t: f64, initial_error: f64, lambda: f64, k: f64, theta_tilde_inf: f64, bounds: (f64, f64)) -> f64 {
    let r = (bounds.1 / bounds.0).sqrt();
    r * initial_error * (-lambda * t).exp()
        + r * (k / (2.0 * lambda)).sqrt() * theta_tilde_inf * (1.0 - (-2.0 * lambda * t).exp()).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBound {
    pub lambda: f64,
    /// `K` multiplying `‖θ̃_∞‖²`.
    pub k: f64,
    pub theta_tilde_inf_sq: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeSample {
    pub t: f64,
    pub energy: f64,
    /// Centered finite-difference `Ė`.
    pub energy_rate: f64,
    /// `−2λE + K‖θ̃_∞‖²`
    pub bound: f64,
}

impl ProbeSample {
    /// `(Ė − bound) / max(1, E)`.
    pub fn scaled_violation(&self) -> f64 {
        (self.energy_rate - self.bound) / self.energy.max(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub samples: Vec<ProbeSample>,
    pub max_scaled_violation: f64,
}

impl ProbeReport {
    /// Number of samples whose scaled violation exceeds `tol`.
    pub fn violations(&self, tol: f64) -> usize {
        self.samples.iter().filter(|s| s.scaled_violation() > tol).count()
    }
}

/// Compare the logged energy's centered difference against
/// `−2λE + K‖θ̃_∞‖²` at every interior log row.
pub fn energy_rate_probe(log: &TrajectoryLog, bound: &EnergyBound) -> ProbeReport {
    let rows = &log.rows;
    let samples: Vec<ProbeSample> = (1..rows.len().saturating_sub(1))
        .map(|j| {
            let (a, b, c) = (&rows[j - 1], &rows[j], &rows[j + 1]);
            ProbeSample {
                t: b.t,
                energy: b.energy,
                energy_rate: (c.energy - a.energy) / (c.t - a.t),
                bound: -2.0 * bound.lambda * b.energy + bound.k * bound.theta_tilde_inf_sq,
            }
        })
        .collect();
    let max_scaled_violation = samples
        .iter()
        .map(ProbeSample::scaled_violation)
        .fold(f64::NEG_INFINITY, f64::max);
    ProbeReport {
        samples,
        max_scaled_violation,
    }
}

/// One independent closed-loop run.
#[derive(Clone)]
pub struct Scenario {
    pub name: String,
    pub model: SystemModel,
    pub metric: Arc<dyn MetricField>,
    pub controller: ControllerConfig,
    pub setpoint: Setpoint,
    pub initial: AdaptiveState,
    pub sim: SimConfig,
}

impl std::fmt::Debug for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scenario")
            .field("name", &self.name)
            .field("model", &self.model)
            .field("controller", &self.controller)
            .field("initial", &self.initial)
            .field("sim", &self.sim)
            .finish()
    }
}

impl Scenario {
    pub fn run(&self) -> Result<TrajectoryLog> {
        simulate(
            &self.model,
            self.metric.as_ref(),
            &self.controller,
            &self.setpoint,
            &self.initial,
            &self.sim,
        )
    }
}

/// Run scenarios independently, one per worker; results keep input order.
pub fn run_batch(exec: Execution, scenarios: &[Scenario]) -> Vec<Result<TrajectoryLog>> {
    parallel::map_slice(exec, scenarios, Scenario::run)
}
