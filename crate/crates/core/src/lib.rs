//! Numerical Riemannian geometry on the manifold of all Riemannian metrics
//! over flat tori.
//!
//! The manifold of metrics carries a family of weak Riemannian structures
//! `G^P_g(h, k) = integral of g(P_g h, k) vol(g)`, parameterized by a positive
//! self-adjoint operator family `P`. This crate discretizes the base torus
//! with periodic fourth-order stencils and realizes, for the identity,
//! conformal, curvature-weighted and Sobolev families:
//!
//! * the full tensor calculus with every first-variation formula,
//! * geodesics of `G^P` integrated in the momentum form `(g, h = P_g g_t)`,
//! * exponential and logarithm maps by shooting,
//! * conserved energy and momentum monitors,
//! * pure-scaling rays, their scalar geodesic equation and path lengths
//!   (exhibiting geodesic incompleteness),
//! * the curl test for whether the Ricci vector field is a `G^P`-gradient.
//!
//! See the book under `book/` for a guided tour, and the `checks` module for
//! the verification suites behind the `metman verify` command.

pub mod checks;
pub mod error;
pub mod explog;
pub mod fd;
pub mod field;
pub mod geodesic;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod operator;
pub mod quad;
pub mod ricci;
pub mod scaling;
pub mod synth;
pub mod variation;

/// Book chapters as doctested documentation.
pub mod book;

pub use error::{Error, Result};
pub use field::{
    integrate_density, MetricField, ScalarField, Slot, SymTensorField2, TensorField, VectorField,
};
pub use geometry::{trace_first_two, ChristoffelField, Curvature, Geometry};
pub use grid::Grid;
pub use operator::{
    CurvatureAdjointForm, OperatorFamily, OperatorSpec, PhiFunction, SolverOptions,
};
