//! Potentials W ≥ 0 on ℝ^d, builtin families, well discovery on slices and
//! rotations of the target space.

mod builtins;
mod descriptor;
mod rotation;
mod scalar;
mod wells;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::numeric::fd_gradient;

pub use builtins::{
    builtin_by_tag, builtin_ginzburg_landau, builtin_w_squared, builtin_wd, Coefficient,
    FnPotential, PdeKind, WSquared, Wd,
};
pub use descriptor::{PdeSpec, PotentialDescriptor};
pub use rotation::{rotate_potential, Rotated, RotationFrame};
pub use scalar::{FnField, Polynomial, ScalarField, Term};
pub use wells::{find_wells_on_slice, Continuum, WellScan};

/// Default well tolerance for closed-form potentials.
pub const TOL_WELL: f64 = 1e-10;
/// Well tolerance for sampled or quadrature-backed potentials.
pub const TOL_WELL_SAMPLED: f64 = 1e-6;

/// An energy density W: ℝ^d → [0, ∞) with gradient.
pub trait Potential: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn eval(&self, z: &[f64]) -> f64;

    fn grad(&self, z: &[f64], out: &mut [f64]) {
        fd_gradient(|x| self.eval(x), z, out);
    }

    fn known_wells(&self) -> Vec<Vec<f64>> {
        Vec::new()
    }

    fn tag(&self) -> String;

    fn well_tolerance(&self) -> f64 {
        TOL_WELL
    }

    /// Metric weight √(2W) of the degenerate geodesic problem.
    fn speed(&self, z: &[f64]) -> f64 {
        (2.0 * self.eval(z).max(0.0)).sqrt()
    }

    /// Gradient of `speed`; zero where the weight vanishes.
    fn speed_grad(&self, z: &[f64], out: &mut [f64]) {
        let m = self.speed(z);
        self.grad(z, out);
        if m < 1e-300 {
            out.iter_mut().for_each(|v| *v = 0.0);
        } else {
            out.iter_mut().for_each(|v| *v /= m);
        }
    }
}

pub type PotentialRef = Arc<dyn Potential>;

/// A zero of W on a slice {z₁ = a}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Well {
    pub point: Vec<f64>,
    pub slice_coord: f64,
    /// False when Newton polishing stalled before reaching the well tolerance.
    pub polished: bool,
}

impl Well {
    pub fn new(point: Vec<f64>) -> Self {
        Self {
            slice_coord: point[0],
            point,
            polished: true,
        }
    }
}
