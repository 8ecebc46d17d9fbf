//! Minimizing geodesics by pseudospectral energy minimization.
//!
//! The curve is parameterized by its values at Chebyshev-Gauss-Lobatto
//! nodes with both endpoints pinned; the interior values are optimized by a
//! BFGS iteration with backtracking line search. The initial inverse Hessian
//! is the exact one for a constant metric (the dual metric at the chord
//! midpoint), which makes nearly flat problems converge in a few steps.

use super::chebyshev::ChebyshevLobatto;
use super::energy::CurveDiscretization;
use super::metric::MetricField;
use super::quadrature::clenshaw_curtis;
use crate::parallel::{self, Execution};
use crate::{Error, Matrix, Result, Vector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    /// Number of Chebyshev-Gauss-Lobatto nodes, endpoints included.
    pub nodes: usize,
    /// Clenshaw-Curtis order used for energy evaluation.
    pub quadrature_order: usize,
    pub max_iterations: usize,
    /// Absolute tolerance on the Euclidean norm of the energy gradient.
    pub gradient_tolerance: f64,
    /// Reuse the previous curve when the endpoints moved by less than this
    /// fraction of the chord length.
    pub warm_start_fraction: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            nodes: 9,
            quadrature_order: 17,
            max_iterations: 200,
            gradient_tolerance: 1e-8,
            warm_start_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geodesic {
    /// Node abscissae in `[0, 1]`.
    pub abscissae: Vec<f64>,
    /// `n × (N+1)` nodal values; column 0 is `p`, column N is `q`.
    pub nodes: Matrix,
    pub energy: f64,
    /// `γ_s(0)`
    pub tangent0: Vector,
    /// `γ_s(1)`
    pub tangent1: Vector,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
}

impl Geodesic {
    pub fn start(&self) -> Vector {
        self.nodes.column(0).into_owned()
    }

    pub fn end(&self) -> Vector {
        self.nodes.column(self.nodes.ncols() - 1).into_owned()
    }
}

#[derive(Debug, Clone)]
pub struct GeodesicSolver {
    settings: SolverSettings,
    disc: CurveDiscretization,
    // inverse of Dᵢᵀ diag(w) Dᵢ over interior nodes
    interior_laplacian_inv: Matrix,
}

impl GeodesicSolver {
    pub fn new(settings: SolverSettings) -> Result<Self> {
        if settings.nodes < 2 {
            return Err(Error::InvalidArgument("geodesic needs at least 2 nodes".into()));
        }
        if settings.gradient_tolerance.is_nan() || settings.gradient_tolerance <= 0.0 {
            return Err(Error::InvalidArgument("gradient tolerance must be positive".into()));
        }
        let grid = ChebyshevLobatto::new(settings.nodes)?;
        let rule = clenshaw_curtis(settings.quadrature_order)?;
        let disc = CurveDiscretization::new(grid, rule);
        let interior = settings.nodes - 2;
        let interior_laplacian_inv = if interior == 0 {
            Matrix::zeros(0, 0)
        } else {
            let full = &disc.tangents(&Matrix::identity(settings.nodes, settings.nodes));
            // rows of `full` are basis tangents at quadrature points: full[j, k]
            let k_count = disc.rule().order();
            let mut lap = Matrix::zeros(interior, interior);
            for a in 0..interior {
                for b in 0..interior {
                    lap[(a, b)] = (0..k_count)
                        .map(|k| disc.rule().weights[k] * full[(a + 1, k)] * full[(b + 1, k)])
                        .sum();
                }
            }
            lap.try_inverse()
                .ok_or_else(|| Error::InvalidArgument("singular interior Laplacian; raise the quadrature order".into()))?
        };
        Ok(Self {
            settings,
            disc,
            interior_laplacian_inv,
        })
    }

    pub fn settings(&self) -> &SolverSettings {
        &self.settings
    }

    pub fn discretization(&self) -> &CurveDiscretization {
        &self.disc
    }

    /// Straight chord `p → q` sampled at the nodes.
    pub fn chord(&self, p: &Vector, q: &Vector) -> Matrix {
        let s = self.disc.grid().nodes();
        let mut c = Matrix::zeros(p.len(), s.len());
        for (k, &sk) in s.iter().enumerate() {
            c.set_column(k, &(p * (1.0 - sk) + q * sk));
        }
        c
    }

    fn finish(&self, nodes: Matrix, energy: f64, converged: bool, iterations: usize, gradient_norm: f64) -> Geodesic {
        let tangents = self.disc.nodal_tangents(&nodes);
        let last = nodes.ncols() - 1;
        Geodesic {
            abscissae: self.disc.grid().nodes().to_vec(),
            tangent0: tangents.column(0).into_owned(),
            tangent1: tangents.column(last).into_owned(),
            nodes,
            energy,
            converged,
            iterations,
            gradient_norm,
        }
    }

    /// Wrap a fixed curve (e.g. the chord fallback) as an unconverged geodesic.
    pub fn unconverged(&self, nodes: Matrix, metric: &dyn MetricField, theta: &Vector) -> Result<Geodesic> {
        let eval = self.disc.energy_and_gradient(&nodes, metric, theta)?;
        let gnorm = interior_norm(&eval.gradient);
        Ok(self.finish(nodes, eval.energy, false, 0, gnorm))
    }

    /// Minimize the energy over interior nodal values with endpoints pinned
    /// at `p` and `q`. `init` (if given) supplies the starting interior nodes;
    /// its end columns are overwritten by `p` and `q`.
    pub fn solve(
        &self,
        p: &Vector,
        q: &Vector,
        metric: &dyn MetricField,
        theta: &Vector,
        init: Option<&Matrix>,
    ) -> Result<Geodesic> {
        let n = metric.dim();
        crate::linalg::check_len("geodesic start point", p, n)?;
        crate::linalg::check_len("geodesic end point", q, n)?;
        crate::linalg::check_len("metric parameters", theta, metric.param_dim())?;
        if p.iter().chain(q.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("geodesic endpoints must be finite".into()));
        }
        let count = self.settings.nodes;
        let last = count - 1;
        if p == q {
            let mut geo = self.finish(self.chord(p, q), 0.0, true, 0, 0.0);
            // the differentiation matrix annihilates constants only up to round-off
            geo.tangent0.fill(0.0);
            geo.tangent1.fill(0.0);
            return Ok(geo);
        }

        let mut curve = match init {
            Some(c) if c.nrows() == n && c.ncols() == count => c.clone(),
            Some(_) => return Err(Error::Dimension("initial curve has the wrong shape".into())),
            None => self.chord(p, q),
        };
        curve.set_column(0, p);
        curve.set_column(last, q);

        let mut eval = self.disc.energy_and_gradient(&curve, metric, theta)?;
        if !eval.energy.is_finite() {
            return Err(Error::OptimizerDiverged {
                iterations: 0,
                reason: "non-finite energy at the initial curve".into(),
            });
        }
        let interior = count - 2;
        if interior == 0 {
            let gnorm = 0.0;
            return Ok(self.finish(curve, eval.energy, true, 0, gnorm));
        }

        let h0 = self.initial_inverse_hessian(p, q, metric, theta);
        let mut h_inv = h0.clone();
        let mut grad = interior_flat(&eval.gradient);
        let mut iterations = 0;
        let mut converged = grad.norm() <= self.settings.gradient_tolerance;
        let mut fresh_hessian = true;

        while !converged && iterations < self.settings.max_iterations {
            let mut dir = -(&h_inv * &grad);
            let mut slope = grad.dot(&dir);
            if slope.is_nan() || slope >= 0.0 {
                h_inv = h0.clone();
                fresh_hessian = true;
                dir = -(&h_inv * &grad);
                slope = grad.dot(&dir);
            }

            let step = self.line_search(&curve, eval.energy, slope, &dir, metric, theta)?;
            let Some((alpha, new_curve, new_eval)) = step else {
                if fresh_hessian {
                    // no descent possible along the preconditioned gradient
                    break;
                }
                h_inv = h0.clone();
                fresh_hessian = true;
                continue;
            };
            iterations += 1;
            let new_grad = interior_flat(&new_eval.gradient);
            let s = &dir * alpha;
            let y = &new_grad - &grad;
            let sy = s.dot(&y);
            if sy > 1e-14 * s.norm() * y.norm() {
                let rho = 1.0 / sy;
                let hy = &h_inv * &y;
                let yhy = y.dot(&hy);
                // H+ = H - ρ(s yᵀH + H y sᵀ) + (ρ² yᵀHy + ρ) s sᵀ
                h_inv -= (&s * hy.transpose() + &hy * s.transpose()) * rho;
                h_inv += (&s * s.transpose()) * (rho * rho * yhy + rho);
                fresh_hessian = false;
            }
            curve = new_curve;
            eval = new_eval;
            grad = new_grad;
            converged = grad.norm() <= self.settings.gradient_tolerance;
        }

        let gnorm = grad.norm();
        if !converged {
            log::debug!(
                "geodesic search stopped after {iterations} iterations with |grad| = {gnorm:e}"
            );
        }
        Ok(self.finish(curve, eval.energy, converged, iterations, gnorm))
    }

    fn line_search(
        &self,
        curve: &Matrix,
        energy: f64,
        slope: f64,
        dir: &Vector,
        metric: &dyn MetricField,
        theta: &Vector,
    ) -> Result<Option<(f64, Matrix, super::energy::EnergyEval)>> {
        const ARMIJO: f64 = 1e-4;
        const ARMIJO_APPROX: f64 = 0.1;
        const CURVATURE: f64 = 0.9;
        const FLAT: f64 = 1e-12;
        let mut alpha = 1.0;
        let mut saw_finite = false;
        for _ in 0..50 {
            let mut trial = curve.clone();
            add_interior(&mut trial, dir, alpha);
            match self.disc.energy_and_gradient(&trial, metric, theta) {
                Ok(ev) if ev.energy.is_finite() => {
                    saw_finite = true;
                    if ev.energy <= energy + ARMIJO * alpha * slope {
                        return Ok(Some((alpha, trial, ev)));
                    }
                    // Near the minimum the Armijo decrease drops below the
                    // round-off in E; accept on the directional derivative
                    // instead (approximate Wolfe conditions).
                    if ev.energy <= energy + FLAT * energy.abs() {
                        let d = interior_flat(&ev.gradient).dot(dir);
                        if d >= CURVATURE * slope && d <= (2.0 * ARMIJO_APPROX - 1.0) * slope {
                            return Ok(Some((alpha, trial, ev)));
                        }
                    }
                }
                // stepped outside the region where W is positive definite
                Ok(_) | Err(Error::Metric { .. }) => {}
                Err(e) => return Err(e),
            }
            alpha *= 0.5;
        }
        if !saw_finite {
            return Err(Error::OptimizerDiverged {
                iterations: 0,
                reason: "energy non-finite along the whole search direction".into(),
            });
        }
        Ok(None)
    }

    fn initial_inverse_hessian(&self, p: &Vector, q: &Vector, metric: &dyn MetricField, theta: &Vector) -> Matrix {
        let n = p.len();
        let mid = (p + q) * 0.5;
        let w = metric.dual(&mid, theta);
        let w = if crate::linalg::spd_inverse(&w).is_some() {
            w
        } else {
            Matrix::identity(n, n)
        };
        let li = &self.interior_laplacian_inv;
        let m = li.nrows();
        let mut h = Matrix::zeros(n * m, n * m);
        for a in 0..m {
            for b in 0..m {
                let c = 0.5 * li[(a, b)];
                for i in 0..n {
                    for k in 0..n {
                        h[(a * n + i, b * n + k)] = c * w[(i, k)];
                    }
                }
            }
        }
        h
    }

    /// Solve with the warm-start rule: reuse `previous` (shifted onto the new
    /// endpoints) when both endpoints moved by less than the configured
    /// fraction of the new chord length.
    pub fn solve_warm(
        &self,
        p: &Vector,
        q: &Vector,
        metric: &dyn MetricField,
        theta: &Vector,
        previous: Option<&Geodesic>,
    ) -> Result<Geodesic> {
        let init = previous.and_then(|prev| self.warm_start_curve(p, q, prev));
        self.solve(p, q, metric, theta, init.as_ref())
    }

    fn warm_start_curve(&self, p: &Vector, q: &Vector, prev: &Geodesic) -> Option<Matrix> {
        if prev.nodes.ncols() != self.settings.nodes || prev.nodes.nrows() != p.len() {
            return None;
        }
        let dp = p - prev.start();
        let dq = q - prev.end();
        let chord = (q - p).norm();
        if dp.norm().max(dq.norm()) >= self.settings.warm_start_fraction * chord {
            return None;
        }
        let mut c = prev.nodes.clone();
        for (k, &s) in self.disc.grid().nodes().iter().enumerate() {
            let shifted = c.column(k) + &dp * (1.0 - s) + &dq * s;
            c.set_column(k, &shifted);
        }
        Some(c)
    }

    /// Solve, falling back to the straight chord (flagged unconverged) if the
    /// optimizer diverges.
    pub fn solve_or_chord(
        &self,
        p: &Vector,
        q: &Vector,
        metric: &dyn MetricField,
        theta: &Vector,
        previous: Option<&Geodesic>,
    ) -> Result<Geodesic> {
        match self.solve_warm(p, q, metric, theta, previous) {
            Err(Error::OptimizerDiverged { reason, .. }) => {
                log::warn!("geodesic optimizer failed ({reason}); using the straight chord");
                self.unconverged(self.chord(p, q), metric, theta)
            }
            other => other,
        }
    }

    /// Solve many independent endpoint pairs.
    pub fn solve_batch(
        &self,
        exec: Execution,
        pairs: &[(Vector, Vector)],
        metric: &dyn MetricField,
        theta: &Vector,
    ) -> Vec<Result<Geodesic>> {
        parallel::map_slice(exec, pairs, |(p, q)| self.solve(p, q, metric, theta, None))
    }

    pub fn energy(&self, curve: &Matrix, metric: &dyn MetricField, theta: &Vector) -> Result<f64> {
        self.disc.energy(curve, metric, theta)
    }

    pub fn length(&self, geo: &Geodesic, metric: &dyn MetricField, theta: &Vector) -> Result<f64> {
        self.disc.length(&geo.nodes, metric, theta)
    }

    /// `max_k |γ_sᵀ M γ_s - E| / E` over the quadrature abscissae.
    pub fn speed_residual(&self, geo: &Geodesic, metric: &dyn MetricField, theta: &Vector) -> Result<f64> {
        if geo.energy == 0.0 {
            return Ok(0.0);
        }
        let speed = self.disc.speed(&geo.nodes, metric, theta)?;
        Ok(speed
            .iter()
            .map(|s| (s - geo.energy).abs() / geo.energy)
            .fold(0.0, f64::max))
    }
}

fn interior_flat(full: &Matrix) -> Vector {
    let n = full.nrows();
    let m = full.ncols() - 2;
    Vector::from_iterator(n * m, (1..=m).flat_map(|j| full.column(j).iter().copied().collect::<Vec<_>>()))
}

fn interior_norm(full: &Matrix) -> f64 {
    if full.ncols() <= 2 {
        return 0.0;
    }
    interior_flat(full).norm()
}

fn add_interior(curve: &mut Matrix, dir: &Vector, alpha: f64) {
    let n = curve.nrows();
    let m = curve.ncols() - 2;
    for j in 0..m {
        for i in 0..n {
            curve[(i, j + 1)] += alpha * dir[j * n + i];
        }
    }
}

/// One-shot geodesic solve with default discretization and the given
/// gradient tolerance.
pub fn solve_geodesic(
    p: &Vector,
    q: &Vector,
    metric: &dyn MetricField,
    theta: &Vector,
    init: Option<&Matrix>,
    tol: f64,
) -> Result<Geodesic> {
    let solver = GeodesicSolver::new(SolverSettings {
        gradient_tolerance: tol,
        ..SolverSettings::default()
    })?;
    solver.solve(p, q, metric, theta, init)
}

/// Endpoint co-tangents `(M(γ(1))γ_s(1), M(γ(0))γ_s(0))` entering the first
/// variation of the energy.
pub fn first_variation_terms(geo: &Geodesic, metric: &dyn MetricField, theta: &Vector) -> Result<(Vector, Vector)> {
    let m1 = metric.metric(&geo.end(), theta)?;
    let m0 = metric.metric(&geo.start(), theta)?;
    Ok((m1 * &geo.tangent1, m0 * &geo.tangent0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::metric::ConstantMetric;
    use approx::assert_relative_eq;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    #[test]
    fn coincident_endpoints() {
        let metric = ConstantMetric::identity(3, 0);
        let p = v(&[0.3, -1.0, 2.0]);
        let geo = solve_geodesic(&p, &p, &metric, &Vector::zeros(0), None, 1e-8).unwrap();
        assert_eq!(geo.energy, 0.0);
        assert_eq!(geo.iterations, 0);
        assert!(geo.converged);
        assert_eq!(geo.tangent0.norm(), 0.0);
        assert_eq!(geo.tangent1.norm(), 0.0);
        let (a, b) = first_variation_terms(&geo, &metric, &Vector::zeros(0)).unwrap();
        assert_eq!(a.norm() + b.norm(), 0.0);
    }

    #[test]
    fn flat_geodesic_is_the_chord() {
        let metric = ConstantMetric::identity(3, 0);
        let p = v(&[1.0, 2.0, -1.0]);
        let q = v(&[-0.5, 0.0, 3.0]);
        let solver = GeodesicSolver::new(SolverSettings::default()).unwrap();
        // start from a bent curve so the optimizer has work to do
        let mut init = solver.chord(&p, &q);
        init[(0, 3)] += 0.5;
        init[(2, 5)] -= 0.3;
        let geo = solver.solve(&p, &q, &metric, &Vector::zeros(0), Some(&init)).unwrap();
        assert!(geo.converged);
        assert_relative_eq!(geo.energy, (&q - &p).norm_squared(), epsilon = 1e-10);
        let chord = solver.chord(&p, &q);
        assert!((&geo.nodes - chord).amax() <= 1e-6);
        let (m1, m0) = first_variation_terms(&geo, &metric, &Vector::zeros(0)).unwrap();
        assert_relative_eq!(m1, &q - &p, epsilon = 1e-8);
        assert_relative_eq!(m0, &q - &p, epsilon = 1e-8);
    }

    #[test]
    fn endpoints_are_pinned_exactly() {
        let metric = ConstantMetric::new(Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]), 0).unwrap();
        let p = v(&[0.1, 0.2]);
        let q = v(&[1.7, -0.4]);
        let geo = solve_geodesic(&p, &q, &metric, &Vector::zeros(0), None, 1e-8).unwrap();
        assert_eq!(geo.start(), p);
        assert_eq!(geo.end(), q);
    }

    #[test]
    fn warm_start_requires_small_motion() {
        let metric = ConstantMetric::identity(2, 0);
        let solver = GeodesicSolver::new(SolverSettings::default()).unwrap();
        let th = Vector::zeros(0);
        let prev = solver.solve(&v(&[0.0, 0.0]), &v(&[1.0, 0.0]), &metric, &th, None).unwrap();
        assert!(solver.warm_start_curve(&v(&[0.0, 0.0]), &v(&[1.05, 0.0]), &prev).is_some());
        assert!(solver.warm_start_curve(&v(&[0.0, 0.0]), &v(&[1.5, 0.0]), &prev).is_none());
        let shifted = solver.warm_start_curve(&v(&[0.0, 0.0]), &v(&[1.05, 0.0]), &prev).unwrap();
        assert_relative_eq!(shifted.column(8).into_owned(), v(&[1.05, 0.0]), epsilon = 1e-15);
    }
}
