//! Variational analysis of maps between statistical manifolds.
//!
//! The crate discretizes a map `u: M → N` from a flat torus into a chart of a
//! statistical manifold `(N, h, ∇)` and evaluates the tension field, the
//! energy and bi-energy, the Jacobi operator `J_u = Δ̄_u − ℜ^u`, and the
//! index, nullity and weak stability read off its spectrum.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geometry;
pub mod fields;
pub mod flow;
pub mod grid;
pub mod pullback;
pub mod runner;
pub mod scenario;
pub mod spectral;
pub mod variational;

pub use error::{Error, Result};
