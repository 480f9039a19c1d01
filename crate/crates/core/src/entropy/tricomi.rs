use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{calibration_value, Entropy, EntropyKind};
use crate::cylinder::{box_gradient, Field};
use crate::error::{LabError, Result};
use crate::numeric::{composite_simpson, seeded_rng};
use crate::potential::{Coefficient, ScalarField};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TricomiOptions {
    /// Largest accepted |∂₁₁w − f(z₁)∂₂₂w| at the audit samples.
    pub pde_tol: f64,
    /// Largest accepted loop integral of ∇α.
    pub loop_tol: f64,
    pub n_pde_samples: usize,
    pub n_loops: usize,
    /// Audits sample the square [−r, r]².
    pub sample_radius: f64,
    /// Simpson panels per path integral.
    pub panels: usize,
    pub seed: u64,
}

impl Default for TricomiOptions {
    fn default() -> Self {
        Self {
            pde_tol: 1e-8,
            loop_tol: 1e-8,
            n_pde_samples: 200,
            n_loops: 100,
            sample_radius: 2.0,
            panels: 64,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConstructionAudit {
    pub pde_residual_max: f64,
    pub loop_residual_max: f64,
    pub n_loops: usize,
}

#[derive(Clone, Debug)]
pub struct TricomiEntropy {
    pub entropy: Entropy,
    pub audit: ConstructionAudit,
    pub w: Arc<dyn ScalarField>,
    pub f: Coefficient,
}

/// Data for α and Φ with Π₀∇Φ = [[0, w], [f(z₁)w, 0]] and
/// −∇α = (f(z₁)∂₂w, ∂₁w), normalized by α(0) = 0 and Φ(0) = 0.
#[derive(Clone, Debug)]
struct Partner {
    w: Arc<dyn ScalarField>,
    f: Coefficient,
    panels: usize,
}

impl Partner {
    fn dw(&self, z1: f64, z2: f64) -> [f64; 2] {
        let mut g = [0.0; 2];
        self.w.gradient(&[z1, z2], &mut g);
        g
    }

    /// ∇α at z.
    fn grad_alpha(&self, z1: f64, z2: f64) -> [f64; 2] {
        let g = self.dw(z1, z2);
        [-self.f.eval(z1) * g[1], -g[0]]
    }

    fn alpha(&self, z1: f64, z2: f64) -> f64 {
        let n = self.panels;
        composite_simpson(|s| self.grad_alpha(s, 0.0)[0], 0.0, z1, n)
            + composite_simpson(|t| self.grad_alpha(z1, t)[1], 0.0, z2, n)
    }

    fn phi(&self, z1: f64, z2: f64) -> Vec<f64> {
        let n = self.panels;
        let phi1 = composite_simpson(|s| (z1 - s) * self.f.eval(s) * self.dw(s, 0.0)[1], 0.0, z1, n)
            + composite_simpson(|t| self.w.value(&[z1, t]), 0.0, z2, n);
        let phi2 = composite_simpson(|s| self.f.eval(s) * self.w.value(&[s, 0.0]), 0.0, z1, n)
            - z2 * self.alpha(z1, 0.0)
            + composite_simpson(|r| (z2 - r) * self.dw(z1, r)[0], 0.0, z2, n);
        vec![phi1, phi2]
    }

    fn jac(&self, z1: f64, z2: f64) -> DMatrix<f64> {
        let a = self.alpha(z1, z2);
        let w = self.w.value(&[z1, z2]);
        DMatrix::from_row_slice(2, 2, &[-a, w, self.f.eval(z1) * w, -a])
    }
}

/// Circulation of ∇α around the axis-aligned rectangle [x0, x1] × [y0, y1].
fn circulation(p: &Partner, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    let n = p.panels;
    composite_simpson(|s| p.grad_alpha(s, y0)[0], x0, x1, n)
        + composite_simpson(|t| p.grad_alpha(x1, t)[1], y0, y1, n)
        - composite_simpson(|s| p.grad_alpha(s, y1)[0], x0, x1, n)
        - composite_simpson(|t| p.grad_alpha(x0, t)[1], y0, y1, n)
}

/// Largest circulation of ∇α over random rectangles in [−r, r]².
pub fn loop_residual(w: Arc<dyn ScalarField>, f: Coefficient, opts: &TricomiOptions) -> f64 {
    let p = Partner {
        w,
        f,
        panels: opts.panels,
    };
    let r = opts.sample_radius;
    let mut rng = seeded_rng(opts.seed, 41);
    (0..opts.n_loops)
        .map(|_| {
            let (a, b) = (rng.gen_range(-r..r), rng.gen_range(-r..r));
            let (c, d) = (rng.gen_range(-r..r), rng.gen_range(-r..r));
            circulation(&p, a.min(b), a.max(b), c.min(d), c.max(d)).abs()
        })
        .fold(0.0, f64::max)
}

/// Entropy for W = ½w² when w solves ∂₁₁w = f(z₁)∂₂₂w with |f| ≤ 1.
pub fn entropy_tricomi(w: Arc<dyn ScalarField>, f: Coefficient, opts: &TricomiOptions) -> Result<TricomiEntropy> {
    if w.dim() != 2 {
        return Err(LabError::Dimension {
            expected: 2,
            got: w.dim(),
        });
    }
    f.validate(10.0, 4000)?;
    let r = opts.sample_radius;
    let mut rng = seeded_rng(opts.seed, 43);
    let mut pde_max: f64 = 0.0;
    for _ in 0..opts.n_pde_samples {
        let z = [rng.gen_range(-r..r), rng.gen_range(-r..r)];
        let h = w.hessian(&z);
        pde_max = pde_max.max((h[0] - f.eval(z[0]) * h[3]).abs());
    }
    if pde_max > opts.pde_tol {
        return Err(LabError::EntropyRejected(format!(
            "w does not solve the Tricomi equation: max residual {pde_max:e}"
        )));
    }
    let loop_max = loop_residual(w.clone(), f.clone(), opts);
    if loop_max > opts.loop_tol {
        return Err(LabError::EntropyRejected(format!(
            "∇α is not closed: max loop integral {loop_max:e}"
        )));
    }
    let kind = match f.as_constant() {
        Some(1.0) => EntropyKind::Sym,
        Some(-1.0) => EntropyKind::Asym,
        _ => EntropyKind::Tricomi,
    };
    let partner = Partner {
        w: w.clone(),
        f: f.clone(),
        panels: opts.panels,
    };
    let (p1, p2) = (partner.clone(), partner);
    let tag = format!("tricomi[{}]", f.label());
    let entropy = Entropy::new(2, kind, tag, move |z| p1.phi(z[0], z[1]), move |z| p2.jac(z[0], z[1]))
        .with_coefficient(f.clone());
    Ok(TricomiEntropy {
        entropy,
        audit: ConstructionAudit {
            pde_residual_max: pde_max,
            loop_residual_max: loop_max,
            n_loops: opts.n_loops,
        },
        w,
        f,
    })
}

/// Entropy with Π₀∇Φ = [[0, w], [−w, 0]] for harmonic w.
pub fn entropy_from_harmonic(w: Arc<dyn ScalarField>, opts: &TricomiOptions) -> Result<TricomiEntropy> {
    let mut e = entropy_tricomi(w, Coefficient::constant(-1.0), opts)?;
    e.entropy.tag = "harmonic".into();
    Ok(e)
}

/// Entropy with Π₀∇Φ = [[0, w], [w, 0]] for w solving the wave equation.
pub fn entropy_from_wave(w: Arc<dyn ScalarField>, opts: &TricomiOptions) -> Result<TricomiEntropy> {
    let mut e = entropy_tricomi(w, Coefficient::constant(1.0), opts)?;
    e.entropy.tag = "wave".into();
    Ok(e)
}

/// Both sides of
/// Φ₁(u⁺) − Φ₁(u⁻) = E(u) − ½∫(1 − f²)|∇u₁|² − ½∫(w − (f∂₂u₁ + ∂₁u₂))² − ½∫(∂₂u₂ − f∂₁u₁)²
/// with cell-centred gradients.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TricomiIdentity {
    /// Φ₁(u⁺) − Φ₁(u⁻).
    pub lhs: f64,
    pub energy: f64,
    pub defect_grad_u1: f64,
    pub defect_w: f64,
    pub defect_sym: f64,
    pub rhs: f64,
    /// ∫ f(u₁) det ∇u, which integrates to boundary terms.
    pub null_lagrangian: f64,
    pub residual: f64,
}

pub fn tricomi_identity_check(w: Arc<dyn ScalarField>, f: Coefficient, field: &Field) -> Result<TricomiIdentity> {
    let g = field.grid;
    if g.d != 2 {
        return Err(LabError::Dimension {
            expected: 2,
            got: g.d,
        });
    }
    let te = entropy_tricomi(w.clone(), f.clone(), &TricomiOptions::default())?;
    let lhs = calibration_value(&te.entropy, field)?;
    let vol = g.h1() * g.slice_cell();
    let mut acc = [0.0; 5];
    for i in 0..g.n1 - 1 {
        for j in 0..g.n_slice() {
            let (m, c) = box_gradient(field, i, j);
            // m = [∂₁u₁, ∂₂u₁, ∂₁u₂, ∂₂u₂]
            let fz = f.eval(c[0]);
            let wv = w.value(&c);
            let grad_sq: f64 = m.iter().map(|v| v * v).sum();
            let g1_sq = m[0] * m[0] + m[1] * m[1];
            acc[0] += vol * (0.5 * grad_sq + 0.5 * wv * wv);
            acc[1] += vol * 0.5 * (1.0 - fz * fz) * g1_sq;
            acc[2] += vol * 0.5 * (wv - (fz * m[1] + m[2])).powi(2);
            acc[3] += vol * 0.5 * (m[3] - fz * m[0]).powi(2);
            acc[4] += vol * fz * (m[0] * m[3] - m[2] * m[1]);
        }
    }
    let rhs = acc[0] - acc[1] - acc[2] - acc[3];
    Ok(TricomiIdentity {
        lhs,
        energy: acc[0],
        defect_grad_u1: acc[1],
        defect_w: acc[2],
        defect_sym: acc[3],
        rhs,
        null_lagrangian: acc[4],
        residual: (lhs - rhs).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cylinder::{from_stream, CylinderGrid, StreamFunction};
    use crate::entropy::{check_punctual, sample_box};
    use crate::potential::{builtin_by_tag, Polynomial};

    #[test]
    fn harmonic_product_gives_holomorphic_entropy() {
        let te = entropy_from_harmonic(Arc::new(Polynomial::product()), &TricomiOptions::default()).unwrap();
        assert_eq!(te.entropy.kind, EntropyKind::Asym);
        assert!(te.audit.loop_residual_max <= 1e-8);
        let mut rng = seeded_rng(5, 0);
        let h = 1e-5;
        for _ in 0..100 {
            let z = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let d = |k: usize, c: usize| {
                let mut zp = z;
                let mut zm = z;
                zp[k] += h;
                zm[k] -= h;
                (te.entropy.phi(&zp)[c] - te.entropy.phi(&zm)[c]) / (2.0 * h)
            };
            let cr1 = d(0, 0) - d(1, 1);
            let cr2 = d(1, 0) + d(0, 1);
            assert!(cr1.abs() <= 1e-8 && cr2.abs() <= 1e-8, "{cr1} {cr2}");
        }
        let p = builtin_by_tag("z1z2").unwrap();
        let samples = sample_box(&[-2.0, -2.0], &[2.0, 2.0], 11, 300, 1);
        let r = check_punctual(&te.entropy, p.as_ref(), &samples, EntropyKind::Asym).unwrap();
        assert!(r.criterion_ok && r.max_equality_gap <= 1e-10);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        for delta in [1.0, -1.0, 0.5] {
            let te = entropy_tricomi(
                Arc::new(Polynomial::tricomi_quadratic(delta)),
                Coefficient::constant(delta),
                &TricomiOptions::default(),
            )
            .unwrap();
            let samples = sample_box(&[-2.0, -2.0], &[2.0, 2.0], 0, 100, 2);
            assert!(te.entropy.jacobian_defect(&samples) <= 1e-6);
        }
    }

    #[test]
    fn constant_coefficients_reduce_to_wave_and_harmonic() {
        let w = Arc::new(Polynomial::tricomi_quadratic(1.0));
        let a = entropy_tricomi(w.clone(), Coefficient::constant(1.0), &TricomiOptions::default()).unwrap();
        let b = entropy_from_wave(w, &TricomiOptions::default()).unwrap();
        let z = [0.3, -0.7];
        assert_eq!(a.entropy.phi(&z), b.entropy.phi(&z));
        assert_eq!(a.entropy.kind, EntropyKind::Sym);
    }

    #[test]
    fn tricomi_half_is_accepted_and_two_is_rejected() {
        let te = entropy_tricomi(
            Arc::new(Polynomial::tricomi_quadratic(0.5)),
            Coefficient::constant(0.5),
            &TricomiOptions::default(),
        )
        .unwrap();
        let p = builtin_by_tag("tricomi0.5").unwrap();
        let samples = sample_box(&[-2.0, -2.0], &[2.0, 2.0], 11, 300, 3);
        let r = check_punctual(&te.entropy, p.as_ref(), &samples, EntropyKind::Tricomi).unwrap();
        assert!(r.criterion_ok);
        assert_eq!(r.structure_residual, 0.0);
        let bad = entropy_tricomi(
            Arc::new(Polynomial::tricomi_quadratic(2.0)),
            Coefficient::constant(2.0),
            &TricomiOptions::default(),
        );
        assert!(matches!(bad, Err(LabError::TricomiCoefficient { .. })));
    }

    #[test]
    fn non_solutions_are_rejected() {
        let w = Arc::new(Polynomial::tricomi_quadratic(0.3));
        let r = entropy_tricomi(w, Coefficient::constant(0.5), &TricomiOptions::default());
        assert!(matches!(r, Err(LabError::EntropyRejected(_))));
    }

    #[test]
    fn identity_holds_on_layers_and_perturbations() {
        let w: Arc<dyn ScalarField> = Arc::new(Polynomial::tricomi_quadratic(1.0));
        let f = Coefficient::constant(1.0);
        let g = CylinderGrid::new(2, 6.0, 128, 16).unwrap();
        let layer = Field::from_profile(g, (vec![0.0, -1.0], vec![0.0, 1.0]), |x| vec![0.0, x.tanh()]);
        let id = tricomi_identity_check(w.clone(), f.clone(), &layer).unwrap();
        let h2 = g.h().powi(2);
        assert!(id.residual <= 10.0 * h2, "{id:?}");
        assert!(id.defect_w + id.defect_sym <= 10.0 * h2);
        assert!(id.null_lagrangian.abs() <= 1e-12);

        let mut s = StreamFunction::new(g, 0.0, -1.0, 1.0).unwrap();
        for i in 0..g.n1 {
            s.background[i] = g.x1(i).tanh();
        }
        s.background[0] = -1.0;
        s.background[g.n1 - 1] = 1.0;
        for i in 0..g.n1 {
            for j in 0..g.n_slice() {
                let (x1, x2) = (g.x1(i), g.xp(j)[0]);
                s.psi[g.node(i, j)] = 0.05 * (-x1 * x1).exp() * (std::f64::consts::TAU * x2).sin();
            }
        }
        s.enforce_collar();
        let pert = from_stream(&s);
        let id = tricomi_identity_check(w, f, &pert).unwrap();
        assert!(id.residual <= 10.0 * h2, "{id:?}");
        assert!(id.defect_w > 0.0 && id.defect_sym > 0.0);

        let c = Field::constant(g, &[0.0, 1.0]);
        let id = tricomi_identity_check(
            Arc::new(Polynomial::tricomi_quadratic(0.5)),
            Coefficient::constant(0.5),
            &c,
        )
        .unwrap();
        assert!(id.lhs.abs() < 1e-14 && id.rhs.abs() < 1e-14);
    }
}
