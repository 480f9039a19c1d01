//! Scalar fields on ℝⁿ with value, gradient and Hessian.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::numeric::fd_gradient;

pub trait ScalarField: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn value(&self, z: &[f64]) -> f64;

    fn gradient(&self, z: &[f64], out: &mut [f64]) {
        fd_gradient(|x| self.value(x), z, out);
    }

    /// Row-major Hessian. The default differentiates `gradient` numerically.
    fn hessian(&self, z: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut h = vec![0.0; n * n];
        let mut zp = z.to_vec();
        let mut gp = vec![0.0; n];
        let mut gm = vec![0.0; n];
        for j in 0..n {
            let step = 1e-5 * (1.0 + z[j].abs());
            zp[j] = z[j] + step;
            self.gradient(&zp, &mut gp);
            zp[j] = z[j] - step;
            self.gradient(&zp, &mut gm);
            zp[j] = z[j];
            for i in 0..n {
                h[i * n + j] = (gp[i] - gm[i]) / (2.0 * step);
            }
        }
        for i in 0..n {
            for j in 0..i {
                let s = 0.5 * (h[i * n + j] + h[j * n + i]);
                h[i * n + j] = s;
                h[j * n + i] = s;
            }
        }
        h
    }
}

/// Monomial `coeff · Π zᵢ^{powers[i]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coeff: f64,
    pub powers: Vec<u32>,
}

/// Multivariate polynomial with exact derivatives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    pub dim: usize,
    pub terms: Vec<Term>,
}

fn powi(x: f64, p: u32) -> f64 {
    x.powi(p as i32)
}

impl Polynomial {
    pub fn new(dim: usize, terms: Vec<Term>) -> Result<Self> {
        if let Some(t) = terms.iter().find(|t| t.powers.len() != dim) {
            return Err(LabError::Dimension {
                expected: dim,
                got: t.powers.len(),
            });
        }
        Ok(Self { dim, terms })
    }

    /// Parses rows of the form `[c, p₁, …, pₙ]`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| LabError::InvalidArgument("polynomial has no terms".into()))?;
        if first.len() < 2 {
            return Err(LabError::InvalidArgument(
                "polynomial rows need a coefficient and at least one exponent".into(),
            ));
        }
        let dim = first.len() - 1;
        let mut terms = Vec::with_capacity(rows.len());
        for row in rows {
            if row.len() != dim + 1 {
                return Err(LabError::Dimension {
                    expected: dim + 1,
                    got: row.len(),
                });
            }
            let mut powers = Vec::with_capacity(dim);
            for &p in &row[1..] {
                if p < 0.0 || p.fract() != 0.0 || p > 64.0 {
                    return Err(LabError::InvalidArgument(format!(
                        "exponent {p} is not a small nonnegative integer"
                    )));
                }
                powers.push(p as u32);
            }
            terms.push(Term {
                coeff: row[0],
                powers,
            });
        }
        Ok(Self { dim, terms })
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.terms
            .iter()
            .map(|t| {
                std::iter::once(t.coeff)
                    .chain(t.powers.iter().map(|&p| p as f64))
                    .collect()
            })
            .collect()
    }

    /// `1 − δ z₁² − z₂²`, the Tricomi example family.
    pub fn tricomi_quadratic(delta: f64) -> Self {
        Self {
            dim: 2,
            terms: vec![
                Term { coeff: 1.0, powers: vec![0, 0] },
                Term { coeff: -delta, powers: vec![2, 0] },
                Term { coeff: -1.0, powers: vec![0, 2] },
            ],
        }
    }

    /// `z₁ z₂`.
    pub fn product() -> Self {
        Self {
            dim: 2,
            terms: vec![Term { coeff: 1.0, powers: vec![1, 1] }],
        }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self {
            dim,
            terms: vec![Term { coeff: c, powers: vec![0; dim] }],
        }
    }
}

impl ScalarField for Polynomial {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, z: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coeff * t.powers.iter().zip(z).map(|(&p, &x)| powi(x, p)).product::<f64>())
            .sum()
    }

    fn gradient(&self, z: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for t in &self.terms {
            for k in 0..self.dim {
                let pk = t.powers[k];
                if pk == 0 {
                    continue;
                }
                let mut m = t.coeff * pk as f64;
                for (i, (&p, &x)) in t.powers.iter().zip(z).enumerate() {
                    m *= if i == k { powi(x, p - 1) } else { powi(x, p) };
                }
                out[k] += m;
            }
        }
    }

    fn hessian(&self, z: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut h = vec![0.0; n * n];
        for t in &self.terms {
            for a in 0..n {
                for b in a..n {
                    let mut e = t.powers.clone();
                    let mut c = t.coeff;
                    if e[a] == 0 {
                        continue;
                    }
                    c *= e[a] as f64;
                    e[a] -= 1;
                    if e[b] == 0 {
                        continue;
                    }
                    c *= e[b] as f64;
                    e[b] -= 1;
                    let m = c * e.iter().zip(z).map(|(&p, &x)| powi(x, p)).product::<f64>();
                    h[a * n + b] += m;
                    if a != b {
                        h[b * n + a] += m;
                    }
                }
            }
        }
        h
    }
}

/// Closure-backed scalar field; derivatives fall back to finite differences.
#[derive(Clone)]
pub struct FnField {
    dim: usize,
    label: String,
    f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
}

impl FnField {
    pub fn new(
        dim: usize,
        label: impl Into<String>,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            label: label.into(),
            f: Arc::new(f),
        }
    }
}

impl fmt::Debug for FnField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FnField({}, dim={})", self.label, self.dim)
    }
}

impl ScalarField for FnField {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, z: &[f64]) -> f64 {
        (self.f)(z)
    }
}
