//! Direct adaptive control of stabilizable nonlinear systems with control
//! contraction metrics.
//!
//! The crate is organized around the pieces a closed loop needs at every
//! control cycle:
//!
//! * [`geometry`]: dual metric fields, Clenshaw-Curtis quadrature, curve
//!   energy and minimizing geodesics on Chebyshev-Gauss-Lobatto nodes.
//! * [`systems`]: control-affine systems with matched and extended-matched
//!   parametric uncertainty, including the built-in third-order example.
//! * [`verify`]: grid certification of the dual CCM, Killing and
//!   parameter-derivative conditions for a given metric.
//! * [`control`]: pointwise min-norm feedback and the adaptation laws with
//!   deadzone and projection modifications.
//! * [`sim`]: fixed-step closed-loop simulation, logging and energy probes.
//!
//! Grid scans, geodesic batches and scenario batches run on rayon when the
//! `parallel` feature is enabled (the default) and sequentially otherwise.

pub mod control;
pub mod error;
pub mod expr;
pub mod geometry;
pub mod linalg;
pub mod parallel;
pub mod sim;
pub mod systems;
pub mod verify;

pub use error::{Error, Result};
pub use parallel::Execution;

pub type Vector = nalgebra::DVector<f64>;
pub type Matrix = nalgebra::DMatrix<f64>;
