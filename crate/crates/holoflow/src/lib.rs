//! Yang-Mills gradient flow on flat special-holonomy tori.
//!
//! The crate splits into an exact algebra layer (exterior forms, calibration
//! eigenspaces, Lie-valued brackets, G2 products), a periodic lattice layer
//! (curvature, covariant derivatives, Laplacians, stress-energy), the flow
//! integrators with their dimensional reductions, and monitors for energy
//! identities, weighted energies and blowup diagnostics.

pub mod exterior;
pub mod flow;
pub mod g2ops;
pub mod geometry;
pub mod lattice;
pub mod liealg;
pub mod monitors;
pub mod util;
