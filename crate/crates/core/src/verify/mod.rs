//! Grid certification of a given dual metric: the projected dual CCM
//! inequality, the Killing condition on the input columns, the parameter
//! derivative identity for extended-matched adaptation, and invariance of the
//! projected inequality under matched uncertainty.

mod grid;

pub use grid::{Axis, VerificationGrid};

use crate::geometry::{metric_params, MetricField};
use crate::linalg::{self, max_sym_eigenvalue, symmetrize};
use crate::parallel;
use crate::systems::UncertainSystem;
use crate::{Error, Matrix, Result, Vector};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Search interval and resolution for the certified contraction rate.
pub const LAMBDA_SEARCH_MAX: f64 = 5.0;
pub const LAMBDA_RESOLUTION: f64 = 1e-3;
/// Acceptance thresholds used by [`certify`].
pub const KILLING_TOLERANCE: f64 = 1e-8;
pub const LEMMA4_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub index: usize,
    pub x: Vec<f64>,
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub lambda: f64,
    pub points: usize,
    /// Largest eigenvalue of the projected inequality over the grid.
    pub max_eigenvalue: f64,
    pub worst_point: GridPoint,
    /// Largest rate in `[0, 5]` passing on the grid; `None` if even `λ = 0` fails.
    pub lambda_certified: Option<f64>,
    pub killing_residual_max: Option<f64>,
    pub lemma4_residual_max: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedSampleResult {
    pub theta_m: Vec<f64>,
    pub max_eigenvalue: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedInvarianceReport {
    pub nominal_pass: bool,
    pub nominal_max_eigenvalue: f64,
    pub samples: Vec<MatchedSampleResult>,
    /// Every sample agrees with the nominal pass/fail verdict.
    pub pass: bool,
}

/// `B⊥ᵀ (W Aᵀ + A W − Ẇ + 2λW) B⊥`, symmetrized.
pub fn projected_condition(w: &Matrix, a: &Matrix, w_dot: &Matrix, b_perp: &Matrix, lambda: f64) -> Matrix {
    let inner = w * a.transpose() + a * w - w_dot + w * (2.0 * lambda);
    symmetrize(&(b_perp.transpose() * inner * b_perp))
}

fn check_setup(system: &dyn UncertainSystem, metric: &dyn MetricField, grid: &VerificationGrid) -> Result<()> {
    let n = system.state_dim();
    if metric.dim() != n {
        return Err(Error::Dimension(format!("metric dimension {} != state dimension {n}", metric.dim())));
    }
    let p = system.extended_dim();
    if metric.param_dim() != 0 && metric.param_dim() != p {
        return Err(Error::Dimension(format!(
            "metric has {} parameters, system has {p} extended-matched parameters",
            metric.param_dim()
        )));
    }
    grid.validate(n, p)
}

// λ-independent pieces of the projected inequality: P(λ) = P₀ + 2λP₁.
struct Parts {
    p0: Matrix,
    p1: Matrix,
}

fn condition_parts(
    system: &dyn UncertainSystem,
    metric: &dyn MetricField,
    x: &Vector,
    theta: &Vector,
    theta_m: &Vector,
) -> Result<Parts> {
    let th = metric_params(metric, theta);
    let w = metric.dual(x, &th);
    if linalg::spd_inverse(&w).is_none() {
        return Err(Error::metric(x.as_slice(), theta.as_slice(), "dual metric is not positive definite"));
    }
    let drift = system.uncertain_drift(x, theta_m, theta);
    let a = system.uncertain_drift_jacobian(x, theta_m, theta);
    let w_dot = metric
        .dual_dx(x, &th)
        .iter()
        .zip(drift.iter())
        .fold(Matrix::zeros(w.nrows(), w.ncols()), |acc, (dw, fi)| acc + dw * *fi);
    let b_perp = linalg::left_null_space(&system.input_matrix(x));
    Ok(Parts {
        p0: projected_condition(&w, &a, &w_dot, &b_perp, 0.0),
        p1: symmetrize(&(b_perp.transpose() * &w * &b_perp)),
    })
}

fn collect_parts(
    system: &dyn UncertainSystem,
    metric: &dyn MetricField,
    grid: &VerificationGrid,
    theta_m: &Vector,
) -> Result<Vec<Parts>> {
    parallel::map_indexed(grid.execution, grid.len(), |i| {
        let (x, theta) = grid.point(i);
        condition_parts(system, metric, &x, &theta, theta_m)
    })
    .into_iter()
    .collect()
}

// Largest eigenvalue and its grid index; ties keep the lowest index and NaN
// counts as a violation.
fn scan(grid: &VerificationGrid, parts: &[Parts], lambda: f64) -> (f64, usize) {
    let eigs = parallel::map_slice(grid.execution, parts, |p| {
        let e = max_sym_eigenvalue(&(&p.p0 + &p.p1 * (2.0 * lambda)));
        if e.is_nan() {
            f64::INFINITY
        } else {
            e
        }
    });
    eigs.iter()
        .enumerate()
        .fold((f64::NEG_INFINITY, 0), |(best, bi), (i, &e)| if e > best { (e, i) } else { (best, bi) })
}

fn certified_rate(grid: &VerificationGrid, parts: &[Parts]) -> Option<f64> {
    let passes = |l: f64| scan(grid, parts, l).0 <= grid.eps_psd;
    if !passes(0.0) {
        return None;
    }
    if passes(LAMBDA_SEARCH_MAX) {
        return Some(LAMBDA_SEARCH_MAX);
    }
    let (mut lo, mut hi) = (0.0, LAMBDA_SEARCH_MAX);
    while hi - lo > LAMBDA_RESOLUTION {
        let mid = 0.5 * (lo + hi);
        if passes(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(lo)
}

fn grid_point(grid: &VerificationGrid, index: usize) -> GridPoint {
    let (x, theta) = grid.point(index);
    GridPoint {
        index,
        x: x.as_slice().to_vec(),
        theta: theta.as_slice().to_vec(),
    }
}

fn contraction_scan(
    system: &dyn UncertainSystem,
    metric: &dyn MetricField,
    grid: &VerificationGrid,
    lambda: f64,
    theta_m: &Vector,
) -> Result<ContractionReport> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::InvalidArgument(format!("contraction rate must be finite and >= 0, got {lambda}")));
    }
    check_setup(system, metric, grid)?;
    let parts = collect_parts(system, metric, grid, theta_m)?;
    let (max_eigenvalue, worst) = scan(grid, &parts, lambda);
    Ok(ContractionReport {
        lambda,
        points: grid.len(),
        max_eigenvalue,
        worst_point: grid_point(grid, worst),
        lambda_certified: certified_rate(grid, &parts),
        killing_residual_max: None,
        lemma4_residual_max: None,
        pass: max_eigenvalue <= grid.eps_psd,
    })
}

/// Check the projected dual CCM inequality at rate `λ` on every grid point,
/// with the drift evaluated at the grid value of the extended-matched
/// parameters.
pub fn check_dual_ccm(
    system: &dyn UncertainSystem,
    metric: &dyn MetricField,
    grid: &VerificationGrid,
    lambda: f64,
) -> Result<ContractionReport> {
    contraction_scan(system, metric, grid, lambda, &Vector::zeros(system.matched_dim()))
}

/// `max ‖−∂_{bᵢ}W + W (∂bᵢ/∂x)ᵀ + (∂bᵢ/∂x) W‖_F` over the grid and input columns.
pub fn check_killing(system: &dyn UncertainSystem, metric: &dyn MetricField, grid: &VerificationGrid) -> Result<f64> {
    check_setup(system, metric, grid)?;
    let m = system.input_dim();
    let residuals = parallel::map_indexed(grid.execution, grid.len(), |idx| {
        let (x, theta) = grid.point(idx);
        let th = metric_params(metric, &theta);
        let w = metric.dual(&x, &th);
        let dw = metric.dual_dx(&x, &th);
        let b = system.input_matrix(&x);
        (0..m)
            .map(|i| {
                let bi = b.column(i);
                let transport = dw
                    .iter()
                    .zip(bi.iter())
                    .fold(Matrix::zeros(w.nrows(), w.ncols()), |acc, (d, c)| acc + d * *c);
                let jb = system.input_column_jacobian(&x, i);
                (-transport + &w * jb.transpose() + jb * &w).norm()
            })
            .fold(0.0, f64::max)
    });
    Ok(residuals.into_iter().fold(0.0, f64::max))
}

/// `max ‖∂M/∂θᵢ + 2 sym(M b_k rᵢᵀ)‖_F` with `rᵢ = (∂ϱᵢ/∂x₁, 0, …, 0)` and
/// `b_k = B𝟙`, over the grid and extended-matched parameters.
pub fn check_lemma4_identity(
    system: &dyn UncertainSystem,
    metric: &dyn MetricField,
    grid: &VerificationGrid,
) -> Result<f64> {
    check_setup(system, metric, grid)?;
    let p = system.extended_dim();
    if p == 0 {
        return Ok(0.0);
    }
    let n = system.state_dim();
    let residuals = parallel::map_indexed(grid.execution, grid.len(), |idx| -> Result<f64> {
        let (x, theta) = grid.point(idx);
        let th = metric_params(metric, &theta);
        let m = metric.metric(&x, &th)?;
        let dm = if metric.param_dim() == 0 {
            vec![Matrix::zeros(n, n); p]
        } else {
            metric.metric_dtheta(&x, &th)?
        };
        let mb = &m * system.indicated_column(&x);
        let drho = system.extended_regressor_dx1(&x);
        Ok((0..p)
            .map(|i| {
                let mut r = Vector::zeros(n);
                r[0] = drho[i];
                let outer = &mb * r.transpose();
                (&dm[i] + (&outer + outer.transpose())).norm()
            })
            .fold(0.0, f64::max))
    });
    residuals
        .into_iter()
        .try_fold(0.0, |acc: f64, r| r.map(|v| acc.max(v)))
}

/// Re-run the contraction scan with the matched term `−Bφᵀθ_m` added to the
/// drift for each sample; passes when every verdict equals the nominal one.
pub fn check_matched_invariance(
    system: &dyn UncertainSystem,
    metric: &dyn MetricField,
    grid: &VerificationGrid,
    lambda: f64,
    theta_samples: &[Vector],
) -> Result<MatchedInvarianceReport> {
    let nominal = check_dual_ccm(system, metric, grid, lambda)?;
    let mut samples = Vec::with_capacity(theta_samples.len());
    for th in theta_samples {
        linalg::check_len("matched parameter sample", th, system.matched_dim())?;
        let r = contraction_scan(system, metric, grid, lambda, th)?;
        samples.push(MatchedSampleResult {
            theta_m: th.as_slice().to_vec(),
            max_eigenvalue: r.max_eigenvalue,
            pass: r.pass,
        });
    }
    let pass = samples.iter().all(|s| s.pass == nominal.pass);
    Ok(MatchedInvarianceReport {
        nominal_pass: nominal.pass,
        nominal_max_eigenvalue: nominal.max_eigenvalue,
        samples,
        pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub contraction: ContractionReport,
    pub killing_pass: bool,
    pub lemma4_pass: bool,
    pub matched: MatchedInvarianceReport,
    pub pass: bool,
}

/// Run all four checks. Passing requires the contraction inequality at `λ`,
/// Killing and derivative residuals within [`KILLING_TOLERANCE`] and
/// [`LEMMA4_TOLERANCE`], and matched invariance.
pub fn certify(
    system: &dyn UncertainSystem,
    metric: &dyn MetricField,
    grid: &VerificationGrid,
    lambda: f64,
    matched_samples: &[Vector],
) -> Result<CertificationReport> {
    let mut contraction = check_dual_ccm(system, metric, grid, lambda)?;
    let killing = check_killing(system, metric, grid)?;
    let lemma4 = check_lemma4_identity(system, metric, grid)?;
    contraction.killing_residual_max = Some(killing);
    contraction.lemma4_residual_max = Some(lemma4);
    let matched = check_matched_invariance(system, metric, grid, lambda, matched_samples)?;
    let killing_pass = killing <= KILLING_TOLERANCE;
    let lemma4_pass = lemma4 <= LEMMA4_TOLERANCE;
    let pass = contraction.pass && killing_pass && lemma4_pass && matched.pass;
    Ok(CertificationReport {
        contraction,
        killing_pass,
        lemma4_pass,
        matched,
        pass,
    })
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

impl fmt::Display for CertificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.contraction;
        writeln!(
            f,
            "dual CCM          {}  lambda = {}  max eigenvalue = {:.6e}  ({} points)",
            verdict(c.pass),
            c.lambda,
            c.max_eigenvalue,
            c.points
        )?;
        writeln!(f, "  worst point     x = {:?}  theta = {:?}", c.worst_point.x, c.worst_point.theta)?;
        match c.lambda_certified {
            Some(l) => writeln!(f, "  certified rate  lambda = {l:.3}")?,
            None => writeln!(f, "  certified rate  none (fails at lambda = 0)")?,
        }
        writeln!(
            f,
            "Killing           {}  max residual = {:.6e}",
            verdict(self.killing_pass),
            c.killing_residual_max.unwrap_or(f64::NAN)
        )?;
        writeln!(
            f,
            "theta derivative  {}  max residual = {:.6e}",
            verdict(self.lemma4_pass),
            c.lemma4_residual_max.unwrap_or(f64::NAN)
        )?;
        writeln!(f, "matched invariance {}", verdict(self.matched.pass))?;
        for s in &self.matched.samples {
            writeln!(
                f,
                "  theta_m = {:?}  {}  max eigenvalue = {:.6e}",
                s.theta_m,
                verdict(s.pass),
                s.max_eigenvalue
            )?;
        }
        write!(f, "overall           {}", verdict(self.pass))
    }
}
