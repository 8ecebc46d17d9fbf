//! Riemannian geometry needed by the controller: dual metric fields, curve
//! energy by Clenshaw-Curtis quadrature and minimizing geodesics on a
//! Chebyshev-Gauss-Lobatto grid.

pub mod chebyshev;
pub mod energy;
pub mod geodesic;
pub mod metric;
pub mod quadrature;

pub use chebyshev::ChebyshevLobatto;
pub use energy::{curve_energy, CurveDiscretization, EnergyEval};
pub use geodesic::{first_variation_terms, solve_geodesic, Geodesic, GeodesicSolver, SolverSettings};
pub use metric::{metric_params, ConstantMetric, ExpressionMetric, MetricField};
pub use quadrature::{clenshaw_curtis, QuadratureRule};
