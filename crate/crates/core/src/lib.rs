//! Linearized Kirchhoff theory for thin plates carrying a prestrain metric.
//!
//! The crate works on graph surfaces `y0 = (x1, x2, f(x1, x2))` sampled on a
//! rectangular parameter grid. It provides
//!
//! * surface geometry, prestrain metrics and their curvature admissibility
//!   ([`surface_geometry`]),
//! * coordinate tensor calculus on the surface ([`tensor_calculus`]),
//! * the quadratic forms of the elastic density and the relaxed plate form
//!   ([`quadratic_forms`]),
//! * a solver for the linear strain equations on elliptic patches
//!   ([`strain_solver`]),
//! * the limiting bending functional and its penalized minimizer
//!   ([`kirchhoff_functional`]),
//! * recovery deformations of the thin body ([`recovery_builder`]) and the
//!   quadrature of their 3D elastic energy ([`energy3d`]).
//!
//! Node loops run on rayon when the default `parallel` feature is enabled and
//! fall back to plain iterators otherwise; results are identical either way.

// NaN must fail the range checks, so they are written as negated comparisons
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod dual;
pub mod energy3d;
pub mod error;
pub mod field;
pub mod grid;
pub mod kirchhoff_functional;
pub mod par;
pub mod quadratic_forms;
pub mod recovery_builder;
pub mod scenario;
mod sparse;
pub mod strain_solver;
pub mod surface_geometry;
pub mod tensor_calculus;

pub use error::{Error, Result};
pub use field::DisplacementField;
pub use grid::{build_grid, Domain, ParamGrid};

pub type V2 = nalgebra::Vector2<f64>;
pub type V3 = nalgebra::Vector3<f64>;
pub type M2 = nalgebra::Matrix2<f64>;
pub type M3 = nalgebra::Matrix3<f64>;

/// Library version embedded in every emitted artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
