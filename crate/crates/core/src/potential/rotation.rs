use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Potential, PotentialRef};
use crate::error::{LabError, Result};

/// Proper rotation R with Rν = e₁.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationFrame {
    pub r: DMatrix<f64>,
    pub nu: Vec<f64>,
}

impl RotationFrame {
    pub fn identity(d: usize) -> Self {
        let mut nu = vec![0.0; d];
        nu[0] = 1.0;
        Self {
            r: DMatrix::identity(d, d),
            nu,
        }
    }

    /// Rotation of the plane by `angle`, R = [[cos, −sin], [sin, cos]].
    pub fn plane(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let r = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let nu = vec![c, -s];
        Self { r, nu }
    }

    /// A proper rotation sending the unit vector ν to e₁.
    ///
    /// Built from the Householder reflection exchanging ν and e₁, followed by a
    /// sign flip of the last row to restore det = +1.
    pub fn from_normal(nu: &[f64]) -> Result<Self> {
        let d = nu.len();
        if d < 2 {
            return Err(LabError::InvalidArgument("frame needs d >= 2".into()));
        }
        let n = crate::numeric::norm(nu);
        if !(n > 0.0) {
            return Err(LabError::InvalidArgument("normal must be nonzero".into()));
        }
        let v = DVector::from_iterator(d, nu.iter().map(|x| x / n));
        let mut e1 = DVector::zeros(d);
        e1[0] = 1.0;
        let diff = &v - &e1;
        let mut r = if diff.norm() < 1e-14 {
            DMatrix::identity(d, d)
        } else {
            let u = diff.normalize();
            let mut h = DMatrix::identity(d, d) - 2.0 * &u * u.transpose();
            let last = d - 1;
            for j in 0..d {
                h[(last, j)] = -h[(last, j)];
            }
            h
        };
        if r.determinant() < 0.0 {
            let last = d - 1;
            for j in 0..d {
                r[(last, j)] = -r[(last, j)];
            }
        }
        Ok(Self {
            r,
            nu: v.iter().copied().collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.nu.len()
    }

    /// The inverse rotation Rᵀ; its normal is R e₁.
    pub fn inverse(&self) -> Self {
        let r = self.r.transpose();
        let nu = self.r.column(0).iter().copied().collect();
        Self { r, nu }
    }

    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d)
            .map(|i| (0..d).map(|j| self.r[(i, j)] * z[j]).sum())
            .collect()
    }

    pub fn apply_transpose(&self, z: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d)
            .map(|i| (0..d).map(|j| self.r[(j, i)] * z[j]).sum())
            .collect()
    }

    /// max |RᵀR − I| and |det R − 1|.
    pub fn orthogonality_defect(&self) -> f64 {
        let d = self.dim();
        let g = self.r.transpose() * &self.r - DMatrix::identity(d, d);
        g.amax().max((self.r.determinant() - 1.0).abs())
    }
}

/// W_R(z) = W(Rz).
#[derive(Clone, Debug)]
pub struct Rotated {
    inner: PotentialRef,
    frame: RotationFrame,
}

impl Potential for Rotated {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval(&self, z: &[f64]) -> f64 {
        self.inner.eval(&self.frame.apply(z))
    }

    fn grad(&self, z: &[f64], out: &mut [f64]) {
        let mut g = vec![0.0; z.len()];
        self.inner.grad(&self.frame.apply(z), &mut g);
        out.copy_from_slice(&self.frame.apply_transpose(&g));
    }

    fn known_wells(&self) -> Vec<Vec<f64>> {
        self.inner
            .known_wells()
            .iter()
            .map(|w| self.frame.apply_transpose(w))
            .collect()
    }

    fn tag(&self) -> String {
        format!("rotated[{}]", self.inner.tag())
    }

    fn well_tolerance(&self) -> f64 {
        self.inner.well_tolerance()
    }
}

pub fn rotate_potential(p: PotentialRef, frame: &RotationFrame) -> Result<Rotated> {
    if p.dim() != frame.dim() {
        return Err(LabError::Dimension {
            expected: p.dim(),
            got: frame.dim(),
        });
    }
    if frame.orthogonality_defect() > 1e-10 {
        return Err(LabError::InvalidArgument("frame is not a proper rotation".into()));
    }
    Ok(Rotated {
        inner: p,
        frame: frame.clone(),
    })
}
