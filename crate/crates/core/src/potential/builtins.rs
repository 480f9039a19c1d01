use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use super::scalar::{Polynomial, ScalarField};
use super::{Potential, PotentialRef, TOL_WELL_SAMPLED};
use crate::error::{LabError, Result};

/// The family W_d(z) = ½(|z|²−1)² + 2|z″|²(z₁²+z₂²), z″ = (z₃,…,z_d).
///
/// For d = 2 this is the Ginzburg–Landau potential ½(1−|z|²)².
#[derive(Clone, Debug)]
pub struct Wd {
    dim: usize,
}

impl Wd {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 2, "W_d needs d >= 2");
        Self { dim }
    }
}

impl Potential for Wd {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, z: &[f64]) -> f64 {
        let r2: f64 = z.iter().map(|x| x * x).sum();
        let s = z[0] * z[0] + z[1] * z[1];
        let q = r2 - s;
        0.5 * (r2 - 1.0) * (r2 - 1.0) + 2.0 * q * s
    }

    fn grad(&self, z: &[f64], out: &mut [f64]) {
        let r2: f64 = z.iter().map(|x| x * x).sum();
        let s = z[0] * z[0] + z[1] * z[1];
        let q = r2 - s;
        let base = 2.0 * (r2 - 1.0);
        for (i, (o, &x)) in out.iter_mut().zip(z).enumerate() {
            let extra = if i < 2 { 4.0 * q } else { 4.0 * s };
            *o = (base + extra) * x;
        }
    }

    fn known_wells(&self) -> Vec<Vec<f64>> {
        let mut wells = Vec::new();
        for k in 0..16 {
            let t = 2.0 * PI * k as f64 / 16.0;
            let mut z = vec![0.0; self.dim];
            z[0] = t.cos();
            z[1] = t.sin();
            wells.push(z);
        }
        for k in 2..self.dim {
            for s in [1.0, -1.0] {
                let mut z = vec![0.0; self.dim];
                z[k] = s;
                wells.push(z);
            }
        }
        wells
    }

    fn tag(&self) -> String {
        if self.dim == 2 {
            "gl".into()
        } else {
            format!("wd{}", self.dim)
        }
    }
}

/// Ginzburg–Landau potential ½(1−|z|²)² on ℝ².
pub fn builtin_ginzburg_landau() -> Wd {
    Wd::new(2)
}

/// W_d for d ≥ 2.
pub fn builtin_wd(d: usize) -> Result<Wd> {
    if d < 2 {
        return Err(LabError::InvalidArgument(format!("W_d needs d >= 2, got {d}")));
    }
    Ok(Wd::new(d))
}

/// Univariate coefficient f(z₁) of the Tricomi equation ∂₁₁w − f(z₁)∂₂₂w = 0.
#[derive(Clone)]
pub struct Coefficient {
    label: String,
    constant: Option<f64>,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl Coefficient {
    pub fn constant(c: f64) -> Self {
        Self {
            label: format!("{c}"),
            constant: Some(c),
            f: Arc::new(move |_| c),
        }
    }

    pub fn new(label: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            label: label.into(),
            constant: None,
            f: Arc::new(f),
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        (self.f)(s)
    }

    pub fn as_constant(&self) -> Option<f64> {
        self.constant
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Checks |f| ≤ 1 on `[-range, range]` at `n` evenly spaced samples.
    pub fn validate(&self, range: f64, n: usize) -> Result<()> {
        for k in 0..=n {
            let s = -range + 2.0 * range * k as f64 / n as f64;
            let v = self.eval(s);
            if !v.is_finite() || v.abs() > 1.0 + 1e-12 {
                return Err(LabError::TricomiCoefficient { at: s, value: v });
            }
        }
        Ok(())
    }
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Coefficient({})", self.label)
    }
}

/// Second-order equation satisfied by w in W = ½w².
#[derive(Clone, Debug)]
pub enum PdeKind {
    /// Δw = 0, i.e. f ≡ −1.
    Harmonic,
    /// □w = ∂₁₁w − ∂₂₂w = 0, i.e. f ≡ 1.
    Wave,
    Tricomi(Coefficient),
    /// No structural equation; the potential is only evaluated.
    General,
}

impl PdeKind {
    pub fn coefficient(&self) -> Option<Coefficient> {
        match self {
            PdeKind::Harmonic => Some(Coefficient::constant(-1.0)),
            PdeKind::Wave => Some(Coefficient::constant(1.0)),
            PdeKind::Tricomi(c) => Some(c.clone()),
            PdeKind::General => None,
        }
    }

    pub fn name(&self) -> String {
        match self {
            PdeKind::Harmonic => "harmonic".into(),
            PdeKind::Wave => "wave".into(),
            PdeKind::Tricomi(c) => format!("tricomi({})", c.label()),
            PdeKind::General => "general".into(),
        }
    }
}

/// W = ½w² for a scalar field w on ℝ².
#[derive(Clone, Debug)]
pub struct WSquared {
    pub w: Arc<dyn ScalarField>,
    pub kind: PdeKind,
    tag: String,
}

impl WSquared {
    pub fn w_value(&self, z: &[f64]) -> f64 {
        self.w.value(z)
    }
}

impl Potential for WSquared {
    fn dim(&self) -> usize {
        self.w.dim()
    }

    fn eval(&self, z: &[f64]) -> f64 {
        let w = self.w.value(z);
        0.5 * w * w
    }

    fn grad(&self, z: &[f64], out: &mut [f64]) {
        let w = self.w.value(z);
        self.w.gradient(z, out);
        out.iter_mut().for_each(|v| *v *= w);
    }

    fn tag(&self) -> String {
        self.tag.clone()
    }

    fn speed(&self, z: &[f64]) -> f64 {
        self.w.value(z).abs()
    }

    fn speed_grad(&self, z: &[f64], out: &mut [f64]) {
        let w = self.w.value(z);
        self.w.gradient(z, out);
        let s = if w > 0.0 {
            1.0
        } else if w < 0.0 {
            -1.0
        } else {
            0.0
        };
        out.iter_mut().for_each(|v| *v *= s);
    }
}

/// Builds W = ½w². Tricomi coefficients are checked for |f| ≤ 1 on [−10, 10].
pub fn builtin_w_squared(w: Arc<dyn ScalarField>, kind: PdeKind) -> Result<WSquared> {
    if w.dim() != 2 {
        return Err(LabError::Dimension {
            expected: 2,
            got: w.dim(),
        });
    }
    if let PdeKind::Tricomi(c) = &kind {
        c.validate(10.0, 4000)?;
    }
    let tag = format!("w_squared[{}]", kind.name());
    Ok(WSquared { w, kind, tag })
}

/// User potential given by closures; the gradient defaults to finite differences.
#[derive(Clone)]
pub struct FnPotential {
    dim: usize,
    tag: String,
    f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    wells: Vec<Vec<f64>>,
}

impl FnPotential {
    pub fn new(
        dim: usize,
        tag: impl Into<String>,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            tag: tag.into(),
            f: Arc::new(f),
            wells: Vec::new(),
        }
    }

    pub fn with_wells(mut self, wells: Vec<Vec<f64>>) -> Self {
        self.wells = wells;
        self
    }
}

impl fmt::Debug for FnPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FnPotential({}, dim={})", self.tag, self.dim)
    }
}

impl Potential for FnPotential {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, z: &[f64]) -> f64 {
        (self.f)(z)
    }
    fn known_wells(&self) -> Vec<Vec<f64>> {
        self.wells.clone()
    }
    fn tag(&self) -> String {
        self.tag.clone()
    }
    fn well_tolerance(&self) -> f64 {
        TOL_WELL_SAMPLED
    }
}

/// Resolves builtin tags: `gl`, `wd<d>`, `z1z2`, `gl_wave`, `tricomi<δ>`.
pub fn builtin_by_tag(tag: &str) -> Result<PotentialRef> {
    let t = tag.trim().to_ascii_lowercase();
    match t.as_str() {
        "gl" | "ginzburg_landau" => return Ok(Arc::new(builtin_ginzburg_landau())),
        "z1z2" => {
            return Ok(Arc::new(builtin_w_squared(
                Arc::new(Polynomial::product()),
                PdeKind::Harmonic,
            )?))
        }
        "gl_wave" => {
            let w = Polynomial::tricomi_quadratic(1.0);
            return Ok(Arc::new(builtin_w_squared(Arc::new(w), PdeKind::Wave)?));
        }
        _ => {}
    }
    if let Some(rest) = t.strip_prefix("wd") {
        let d: usize = rest
            .trim_start_matches([':', '_'])
            .parse()
            .map_err(|_| LabError::UnknownPotential(tag.into()))?;
        return Ok(Arc::new(builtin_wd(d)?));
    }
    if let Some(rest) = t.strip_prefix("tricomi") {
        let delta: f64 = if rest.is_empty() {
            0.5
        } else {
            rest.trim_start_matches([':', '_'])
                .parse()
                .map_err(|_| LabError::UnknownPotential(tag.into()))?
        };
        let w = Polynomial::tricomi_quadratic(delta);
        return Ok(Arc::new(builtin_w_squared(
            Arc::new(w),
            PdeKind::Tricomi(Coefficient::constant(delta)),
        )?));
    }
    Err(LabError::UnknownPotential(tag.into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::fd_gradient;
    use rand::Rng;

    #[test]
    fn ginzburg_landau_values() {
        let gl = builtin_ginzburg_landau();
        assert_eq!(gl.eval(&[1.0, 0.0]), 0.0);
        assert_eq!(gl.eval(&[0.0, 0.0]), 0.5);
        let mut g = [1.0; 2];
        gl.grad(&[0.0, 0.0], &mut g);
        assert_eq!(g, [0.0, 0.0]);
    }

    #[test]
    fn wd_values_and_wells() {
        let w3 = builtin_wd(3).unwrap();
        assert!((w3.eval(&[1.0, 1.0, 0.0]) - 0.5).abs() < 1e-15);
        assert_eq!(w3.eval(&[0.0, 0.0, 1.0]), 0.0);
        let mut g = [0.0; 3];
        for z in w3.known_wells() {
            assert!(w3.eval(&z) < 1e-10);
            w3.grad(&z, &mut g);
            assert!(g.iter().all(|v| v.abs() < 1e-10));
        }
        let w2 = builtin_wd(2).unwrap();
        let gl = builtin_ginzburg_landau();
        for z in [[0.3, -1.2], [1.5, 0.1]] {
            assert_eq!(w2.eval(&z), gl.eval(&z));
        }
        assert!(builtin_wd(1).is_err());
    }

    #[test]
    fn w_squared_examples() {
        let h = builtin_w_squared(Arc::new(Polynomial::product()), PdeKind::Harmonic).unwrap();
        assert!((h.eval(&[1.0, 1.0]) - 0.5).abs() < 1e-15);
        let gl_w = builtin_w_squared(Arc::new(Polynomial::tricomi_quadratic(1.0)), PdeKind::Wave)
            .unwrap();
        let gl = builtin_ginzburg_landau();
        let mut rng = crate::numeric::seeded_rng(3, 0);
        for _ in 0..100 {
            let z = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            assert!((gl_w.eval(&z) - gl.eval(&z)).abs() < 1e-12);
        }
        let ok = builtin_w_squared(
            Arc::new(Polynomial::tricomi_quadratic(0.5)),
            PdeKind::Tricomi(Coefficient::constant(0.5)),
        );
        assert!(ok.is_ok());
        let bad = builtin_w_squared(
            Arc::new(Polynomial::tricomi_quadratic(2.0)),
            PdeKind::Tricomi(Coefficient::constant(2.0)),
        );
        assert!(matches!(bad, Err(LabError::TricomiCoefficient { .. })));
    }

    #[test]
    fn builtin_gradients_match_finite_differences() {
        let pots: Vec<PotentialRef> = vec![
            builtin_by_tag("gl").unwrap(),
            builtin_by_tag("wd3").unwrap(),
            builtin_by_tag("wd4").unwrap(),
            builtin_by_tag("z1z2").unwrap(),
            builtin_by_tag("tricomi0.5").unwrap(),
        ];
        let mut rng = crate::numeric::seeded_rng(11, 0);
        for p in pots {
            let d = p.dim();
            let mut g = vec![0.0; d];
            let mut fd = vec![0.0; d];
            for _ in 0..1000 {
                let z: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
                assert!(p.eval(&z) >= 0.0);
                p.grad(&z, &mut g);
                fd_gradient(|x| p.eval(x), &z, &mut fd);
                let scale = crate::numeric::norm(&g).max(1.0);
                for i in 0..d {
                    assert!((g[i] - fd[i]).abs() / scale < 1e-6, "{} at {:?}", p.tag(), z);
                }
            }
        }
    }

    #[test]
    fn unknown_tag_is_an_error() {
        assert!(matches!(builtin_by_tag("nope"), Err(LabError::UnknownPotential(_))));
    }
}
