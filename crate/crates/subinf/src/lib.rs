//! Numerical toolkit for the subelliptic ∞-Laplace system on
//! Carnot–Carathéodory spaces.
//!
//! A frame `X = {X_1, ..., X_m}` of vector fields on a domain in `R^n`
//! induces a horizontal gradient `Xu` for maps `u : R^n -> R^N`. This crate
//! evaluates the associated ∞-Laplacian and p-Laplacian operators, checks
//! their variational characterization and maximum principles at desk scale,
//! integrates the horizontal gradient flow, approximates
//! Carnot–Carathéodory distances, and minimizes discrete p-energies on grids.
//!
//! Modules mirror the layers of the computation:
//!
//! - [`frames`]: vector-field frames, Lie brackets, Hörmander rank checks
//! - [`maps`]: built-in analytic test maps with exact second-order jets
//! - [`calculus`]: jets, horizontal gradients, second horizontal derivatives
//! - [`grid`]: sampled fields on rectangular lattices
//! - [`operators`]: projectors, ∞-Laplacian, p-Laplacian (both forms)
//! - [`ccgeometry`]: admissible curves and CC-distance approximation
//! - [`flow`]: the horizontal gradient flow and its invariants
//! - [`variational`]: sup/p-energies, rank-one and vertical variation tests
//! - [`psolve`]: discrete p-energy minimization and p-continuation
//! - [`suite`]: the self-checking acceptance suite

pub mod calculus;
pub mod ccgeometry;
pub mod error;
pub mod flow;
pub mod frames;
pub mod geometry;
pub mod grid;
pub mod maps;
pub mod operators;
pub mod psolve;
pub mod suite;
pub mod variational;

pub use error::{Error, Result};
pub use geometry::BoxDomain;
