//! Truncated cylinder [−L, L] × 𝕋^{d−1}: discretization, divergence-free
//! parametrizations, energy minimization and symmetry diagnostics.

mod effective;
mod grid;
mod minimize;
mod ops;
mod projection;
mod stream;

pub use effective::{effective_potential_v, EffectiveOptions, EffectiveResult, TorusSlice};
pub use grid::{CylinderGrid, Field, SnapshotHeader};
pub use minimize::{embed_profile, minimize, random_admissible_field, residual_stokes, Init, MinimizeOptions, MinimizeReport};
pub use ops::{
    box_gradient, centered_gradient, divergence, divergence_max, energy, energy_and_gradient,
    jin_kohn_check, slice_average, slice_variance, JinKohn,
};
pub use projection::{project_div_free, Projector};
pub use stream::{from_stream, smooth_switch, StreamFunction, COLLAR};
