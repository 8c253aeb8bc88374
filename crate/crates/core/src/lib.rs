//! Fully nonlinear integro-differential operators whose kernels deform like
//! sections of a convex Monge-Ampère potential.
//!
//! The crate is organised bottom-up:
//!
//! * [`potential`] – closed-form convex potentials and their height function.
//! * [`sections`] – section geometry, ellipsoid normalisation and coverings.
//! * [`grid`] – lattices, exterior data and grid functions.
//! * [`kernels`] – second differences, kernel classes, singular quadrature,
//!   the lattice stencil used by the solver, and barrier functions.
//! * [`solver`] – monotone Dirichlet solver and comparison checks.
//! * [`mc`] – Monte Carlo exit payoffs of the associated jump process.
//! * [`envelope`] – concave envelopes, contact sets and the ABP pipeline.
//! * [`regularity`] – tail, Harnack, Hölder and C^{1,α} experiments.
//!
//! Points always live in `Vector2<f64>`; for one-dimensional problems the
//! second coordinate is kept at zero and ignored.

pub mod envelope;
pub mod error;
pub mod geom;
pub mod grid;
pub mod kernels;
pub mod mc;
pub mod numeric;
pub mod potential;
pub mod regularity;
pub mod sections;
pub mod solver;

mod par;

pub use error::{Error, Result};
pub use geom::{Mat, Point};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
