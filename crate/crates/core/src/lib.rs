//! Numerical toolkit for transition layers of multi-well potentials.
//!
//! The crate computes optimal one-dimensional profiles and degenerate
//! geodesic costs, minimizes the divergence-constrained energy
//! `E(u) = ∫ ½|∇u|² + W(u)` on a truncated periodic cylinder, and checks
//! entropy (calibration) lower bounds, including explicit calibrations for
//! finite metrics built from cut decompositions.

pub mod cylinder;
pub mod entropy;
pub mod error;
pub mod lbfgs;
pub mod metric;
pub mod numeric;
pub mod potential;
pub mod profile;

pub use error::{LabError, Result};
