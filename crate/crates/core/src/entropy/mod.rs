//! Entropies Φ: ℝ^d → ℝ^d, their punctual criteria, saturation, discrete
//! calibration values, explicit constructions and first-order optimality
//! residuals.

mod higher;
mod tricomi;

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cylinder::{centered_gradient, Field};
use crate::error::{LabError, Result};
use crate::numeric::seeded_rng;
use crate::potential::{Coefficient, Potential};
use crate::profile::{geodesic_cost, geodesic_cost_2d, GeodesicOptions, PathSpace};

pub use higher::{
    affine_homothety_entropy, asym_rigidity_entropy, entropy_phi_d, ode3d_solve, psi_d, psi_d_gradient,
    psi_d_hessian, psi_extend, rigidity_regression, FixedPoint, Ode3dTrajectory, RigidityFit,
};
pub use tricomi::{
    entropy_from_harmonic, entropy_from_wave, entropy_tricomi, loop_residual, tricomi_identity_check,
    ConstructionAudit, TricomiEntropy, TricomiIdentity, TricomiOptions,
};

/// Which punctual criterion an entropy is meant to satisfy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyKind {
    /// |Π₀∇Φ|² ≤ 2W.
    Strong,
    /// ∇Φ symmetric and |Π₀∇Φ|² ≤ 4W.
    Sym,
    /// Π₀∇Φ antisymmetric and |Π₀∇Φ|² ≤ 4W.
    Asym,
    /// Π₀∇Φ = [[0, w], [f(z₁)w, 0]] with |f| ≤ 1 and |Π₀∇Φ|² ≤ 4W.
    Tricomi,
}

impl EntropyKind {
    /// Constant c in the criterion |Π₀∇Φ|² ≤ cW.
    pub fn criterion_constant(self) -> f64 {
        match self {
            EntropyKind::Strong => 2.0,
            _ => 4.0,
        }
    }

    /// Constant c in the equipartition identity W = c|Π₀∇Φ|².
    pub fn equipartition_constant(self) -> f64 {
        match self {
            EntropyKind::Strong => 0.5,
            _ => 0.25,
        }
    }
}

type VecMap = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type JacMap = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// A map Φ with its Jacobian ∇Φ_{ij} = ∂_jΦ_i.
#[derive(Clone)]
pub struct Entropy {
    pub dim: usize,
    pub kind: EntropyKind,
    pub tag: String,
    /// f(z₁) for Tricomi entropies.
    pub coefficient: Option<Coefficient>,
    phi: VecMap,
    jac: JacMap,
}

impl fmt::Debug for Entropy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Entropy")
            .field("dim", &self.dim)
            .field("kind", &self.kind)
            .field("tag", &self.tag)
            .finish()
    }
}

impl Entropy {
    pub fn new(
        dim: usize,
        kind: EntropyKind,
        tag: impl Into<String>,
        phi: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        jac: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            kind,
            tag: tag.into(),
            coefficient: None,
            phi: Arc::new(phi),
            jac: Arc::new(jac),
        }
    }

    pub fn with_coefficient(mut self, f: Coefficient) -> Self {
        self.coefficient = Some(f);
        self
    }

    pub fn phi(&self, z: &[f64]) -> Vec<f64> {
        (self.phi)(z)
    }

    pub fn jac(&self, z: &[f64]) -> DMatrix<f64> {
        (self.jac)(z)
    }

    /// Largest relative mismatch between `jac` and central differences of
    /// `phi` over the samples.
    pub fn jacobian_defect(&self, samples: &[Vec<f64>]) -> f64 {
        let d = self.dim;
        samples
            .par_iter()
            .map(|z| {
                let j = self.jac(z);
                let mut worst: f64 = 0.0;
                let mut zp = z.clone();
                for c in 0..d {
                    let h = 1e-5 * (1.0 + z[c].abs());
                    zp[c] = z[c] + h;
                    let fp = self.phi(&zp);
                    zp[c] = z[c] - h;
                    let fm = self.phi(&zp);
                    zp[c] = z[c];
                    for r in 0..d {
                        let fd = (fp[r] - fm[r]) / (2.0 * h);
                        worst = worst.max((fd - j[(r, c)]).abs() / (1.0 + fd.abs()));
                    }
                }
                worst
            })
            .reduce(|| 0.0, f64::max)
    }
}

/// Π₀U = U − (tr U / d) I.
pub fn traceless(m: &DMatrix<f64>) -> DMatrix<f64> {
    let d = m.nrows();
    let t = m.trace() / d as f64;
    let mut out = m.clone();
    for i in 0..d {
        out[(i, i)] -= t;
    }
    out
}

/// Π⁺U = ½(U + Uᵀ).
pub fn sym_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Π⁻U = ½(U − Uᵀ).
pub fn asym_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m - m.transpose()) * 0.5
}

/// Outcome of a punctual criterion sweep.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EntropyReport {
    pub kind: EntropyKind,
    pub criterion_ok: bool,
    /// max over samples of max(0, |Π₀∇Φ|² − cW).
    pub max_violation: f64,
    /// Largest departure from the structural requirement of the kind.
    pub structure_residual: f64,
    /// max over samples of ||Π₀∇Φ|² − cW|; zero for saturating pairs.
    pub max_equality_gap: f64,
    /// Filled in by [`check_saturation`] when requested.
    pub saturation_gap: Option<f64>,
    pub n_samples: usize,
    /// Bounding box of the samples actually checked.
    pub box_lo: Vec<f64>,
    pub box_hi: Vec<f64>,
}

/// Tolerance for criterion violations and structural residuals.
pub const PUNCTUAL_TOL: f64 = 1e-9;

/// Checks the punctual criterion of `kind` at every sample.
pub fn check_punctual(e: &Entropy, p: &dyn Potential, samples: &[Vec<f64>], kind: EntropyKind) -> Result<EntropyReport> {
    if p.dim() != e.dim {
        return Err(LabError::Dimension {
            expected: e.dim,
            got: p.dim(),
        });
    }
    if samples.is_empty() {
        return Err(LabError::InvalidArgument("no samples".into()));
    }
    let c = kind.criterion_constant();
    let (viol, structure, gap) = samples
        .par_iter()
        .map(|z| {
            let j = e.jac(z);
            let t = traceless(&j);
            let w = p.eval(z);
            let sq = t.norm_squared();
            let s = structure_defect(&t, kind, e.coefficient.as_ref(), z);
            ((sq - c * w).max(0.0), s, (sq - c * w).abs())
        })
        .reduce(
            || (0.0, 0.0, 0.0),
            |a, b| (a.0.max(b.0), a.1.max(b.1), a.2.max(b.2)),
        );
    let d = e.dim;
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for z in samples {
        for k in 0..d {
            lo[k] = lo[k].min(z[k]);
            hi[k] = hi[k].max(z[k]);
        }
    }
    Ok(EntropyReport {
        kind,
        criterion_ok: viol <= PUNCTUAL_TOL && structure <= PUNCTUAL_TOL,
        max_violation: viol,
        structure_residual: structure,
        max_equality_gap: gap,
        saturation_gap: None,
        n_samples: samples.len(),
        box_lo: lo,
        box_hi: hi,
    })
}

fn structure_defect(t: &DMatrix<f64>, kind: EntropyKind, f: Option<&Coefficient>, z: &[f64]) -> f64 {
    match kind {
        EntropyKind::Strong => 0.0,
        EntropyKind::Sym => asym_part(t).amax(),
        EntropyKind::Asym => sym_part(t).amax(),
        EntropyKind::Tricomi => {
            let fz = f.map(|c| c.eval(z[0])).unwrap_or(f64::NAN);
            if t.nrows() != 2 || !fz.is_finite() {
                return f64::INFINITY;
            }
            let bound = (fz.abs() - 1.0).max(0.0);
            t[(0, 0)]
                .abs()
                .max(t[(1, 1)].abs())
                .max((t[(1, 0)] - fz * t[(0, 1)]).abs())
                .max(bound)
        }
    }
}

/// Samples on a regular grid with `n_grid` points per axis plus `n_random`
/// uniform points in the box.
pub fn sample_box(lo: &[f64], hi: &[f64], n_grid: usize, n_random: usize, seed: u64) -> Vec<Vec<f64>> {
    let d = lo.len();
    let mut out = Vec::new();
    if n_grid >= 2 {
        let total = n_grid.pow(d as u32);
        for idx in 0..total {
            let mut r = idx;
            let z = (0..d)
                .map(|k| {
                    let c = r % n_grid;
                    r /= n_grid;
                    lo[k] + (hi[k] - lo[k]) * c as f64 / (n_grid - 1) as f64
                })
                .collect();
            out.push(z);
        }
    }
    let mut rng = seeded_rng(seed, 31);
    for _ in 0..n_random {
        out.push((0..d).map(|k| rng.gen_range(lo[k]..=hi[k])).collect());
    }
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SaturationReport {
    /// Φ₁(u⁺) − Φ₁(u⁻).
    pub phi_jump: f64,
    /// Degenerate geodesic cost on the slice {z₁ = a}.
    pub geodesic_cost: f64,
    /// geodesic_cost − phi_jump.
    pub gap: f64,
    pub saturated: bool,
}

/// Default saturation tolerance.
pub const SATURATION_TOL: f64 = 1e-4;

/// Compares Φ₁(u⁺) − Φ₁(u⁻) with the geodesic cost between the wells.
pub fn check_saturation(
    e: &Entropy,
    p: &dyn Potential,
    a: f64,
    u_minus: &[f64],
    u_plus: &[f64],
) -> Result<SaturationReport> {
    let d = e.dim;
    if p.dim() != d || u_minus.len() != d || u_plus.len() != d {
        return Err(LabError::Dimension {
            expected: d,
            got: u_minus.len(),
        });
    }
    for z in [u_minus, u_plus] {
        if (z[0] - a).abs() > 1e-12 {
            return Err(LabError::InvalidArgument(format!("{z:?} is off the slice {a}")));
        }
    }
    let phi_jump = e.phi(u_plus)[0] - e.phi(u_minus)[0];
    let geod = if u_minus == u_plus {
        0.0
    } else if d == 2 {
        geodesic_cost_2d(p, a, u_minus[1], u_plus[1])?
    } else {
        geodesic_cost(p, PathSpace::Slice(a), u_minus, u_plus, &GeodesicOptions::default())?.cost
    };
    let gap = geod - phi_jump;
    Ok(SaturationReport {
        phi_jump,
        geodesic_cost: geod,
        gap,
        saturated: gap.abs() <= SATURATION_TOL,
    })
}

/// Discrete ∫ ∇·[Φ(u)] with forward differences on every cell edge; it
/// telescopes to the torus averages of Φ₁ on the end slices.
pub fn calibration_value(e: &Entropy, f: &Field) -> Result<f64> {
    let g = f.grid;
    if e.dim != g.d {
        return Err(LabError::Dimension {
            expected: g.d,
            got: e.dim,
        });
    }
    let d = g.d;
    let phis: Vec<Vec<f64>> = (0..g.n_nodes())
        .into_par_iter()
        .map(|n| e.phi(&f.values[n * d..(n + 1) * d]))
        .collect();
    let (h1, hp) = (g.h1(), g.hp());
    let vol = h1 * g.slice_cell();
    let ns = g.n_slice();
    let rows: Vec<f64> = (0..g.n1 - 1)
        .into_par_iter()
        .map(|i| {
            let mut s = 0.0;
            for j in 0..ns {
                let n = g.node(i, j);
                let here = &phis[n];
                s += (phis[g.node(i + 1, j)][0] - here[0]) / h1;
                for k in 0..d - 1 {
                    let jn = g.shift(j, k, true);
                    s += (phis[g.node(i, jn)][k + 1] - here[k + 1]) / hp;
                }
            }
            s * vol
        })
        .collect();
    Ok(rows.iter().sum())
}

/// L² norms of the first-order optimality defect and of the equipartition
/// defect.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PdeResidual {
    /// (∫ |D(∇u) − Π₀∇Φ(u)|²)^{1/2} with D fixed by the kind.
    pub defect_l2: f64,
    /// (∫ (W(u) − c|Π₀∇Φ(u)|²)²)^{1/2}.
    pub equipartition_l2: f64,
    /// ∫ (W(u) − c|Π₀∇Φ(u)|²), signed.
    pub equipartition_integral: f64,
}

impl PdeResidual {
    /// c′ ∫ |defect|² + ∫ (W − c|Π₀∇Φ|²) with c′ = c for the kind; for
    /// divergence-free fields this approximates E(u) minus the calibration
    /// value.
    pub fn energy_excess(&self, kind: EntropyKind) -> f64 {
        kind.equipartition_constant() * self.defect_l2 * self.defect_l2 + self.equipartition_integral
    }

    pub fn total(&self) -> f64 {
        self.defect_l2 + self.equipartition_l2
    }
}

/// Defect of ∇uᵀ = Π₀∇Φ(u) (strong), 2Π⁻∇uᵀ = Π₀∇Φ(u) (asym) or
/// 2Π⁺∇u = Π₀∇Φ(u) (sym) at interior nodes, with centered differences.
pub fn pde_residual(e: &Entropy, p: &dyn Potential, f: &Field, kind: EntropyKind) -> Result<PdeResidual> {
    let g = f.grid;
    let d = g.d;
    if e.dim != d || p.dim() != d {
        return Err(LabError::Dimension {
            expected: d,
            got: e.dim,
        });
    }
    let c = kind.equipartition_constant();
    let vol = g.h1() * g.slice_cell();
    let rows: Vec<(f64, f64, f64)> = (1..g.n1 - 1)
        .into_par_iter()
        .map(|i| {
            let mut acc = (0.0, 0.0, 0.0);
            for j in 0..g.n_slice() {
                let u = f.at(i, j);
                let grad = DMatrix::from_row_slice(d, d, &centered_gradient(f, i, j));
                let t = traceless(&e.jac(u));
                let lhs = match kind {
                    EntropyKind::Strong => grad.transpose(),
                    EntropyKind::Asym => asym_part(&grad.transpose()) * 2.0,
                    EntropyKind::Sym | EntropyKind::Tricomi => sym_part(&grad) * 2.0,
                };
                let eq = p.eval(u) - c * t.norm_squared();
                acc.0 += vol * (lhs - t).norm_squared();
                acc.1 += vol * eq * eq;
                acc.2 += vol * eq;
            }
            acc
        })
        .collect();
    let (a, b, s) = rows
        .iter()
        .fold((0.0, 0.0, 0.0), |x, y| (x.0 + y.0, x.1 + y.1, x.2 + y.2));
    Ok(PdeResidual {
        defect_l2: a.sqrt(),
        equipartition_l2: b.sqrt(),
        equipartition_integral: s,
    })
}

/// Builtin entropies keyed by tag: `gl_wave`, `z1z2_harmonic`,
/// `tricomi<δ>`, `phi<d>`.
pub fn entropy_by_tag(tag: &str) -> Result<Entropy> {
    use crate::potential::Polynomial;
    let t = tag.trim().to_ascii_lowercase();
    match t.as_str() {
        "gl_wave" | "wave_gl" => {
            return Ok(entropy_from_wave(Arc::new(Polynomial::tricomi_quadratic(1.0)), &TricomiOptions::default())?.entropy)
        }
        "z1z2_harmonic" | "harmonic_z1z2" => {
            return Ok(entropy_from_harmonic(Arc::new(Polynomial::product()), &TricomiOptions::default())?.entropy)
        }
        _ => {}
    }
    if let Some(rest) = t.strip_prefix("tricomi") {
        let delta: f64 = if rest.is_empty() {
            0.5
        } else {
            rest.trim_start_matches([':', '_'])
                .parse()
                .map_err(|_| LabError::EntropyRejected(format!("unknown entropy {tag}")))?
        };
        return Ok(entropy_tricomi(
            Arc::new(Polynomial::tricomi_quadratic(delta)),
            Coefficient::constant(delta),
            &TricomiOptions::default(),
        )?
        .entropy);
    }
    if let Some(rest) = t.strip_prefix("phi") {
        let d: usize = rest
            .trim_start_matches([':', '_'])
            .parse()
            .map_err(|_| LabError::EntropyRejected(format!("unknown entropy {tag}")))?;
        return entropy_phi_d(d);
    }
    Err(LabError::EntropyRejected(format!("unknown entropy {tag}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cylinder::{from_stream, CylinderGrid, StreamFunction};
    use crate::potential::builtin_by_tag;

    fn random_matrix(rng: &mut impl Rng, d: usize) -> DMatrix<f64> {
        DMatrix::from_fn(d, d, |_, _| rng.gen_range(-2.0..2.0))
    }

    #[test]
    fn projections_decompose_matrices() {
        let mut rng = seeded_rng(1, 0);
        assert!(traceless(&DMatrix::identity(3, 3)).amax() == 0.0);
        for k in 0..100 {
            let d = 2 + k % 3;
            let u = random_matrix(&mut rng, d);
            let back = sym_part(&u) + asym_part(&u);
            assert!((back - &u).amax() <= 1e-14);
            let t = traceless(&u);
            let lhs = t.norm_squared() + u.trace().powi(2) / d as f64;
            assert!((lhs - u.norm_squared()).abs() <= 1e-12);
        }
    }

    #[test]
    fn homothety_passes_every_criterion() {
        let e = affine_homothety_entropy(2, 1.7, &[0.3, -0.2]);
        let p = builtin_by_tag("gl").unwrap();
        let samples = sample_box(&[-2.0, -2.0], &[2.0, 2.0], 11, 200, 0);
        for kind in [EntropyKind::Strong, EntropyKind::Sym, EntropyKind::Asym] {
            let r = check_punctual(&e, p.as_ref(), &samples, kind).unwrap();
            assert!(r.criterion_ok);
            assert_eq!(r.max_violation, 0.0);
        }
    }

    #[test]
    fn wave_entropy_saturates_gl() {
        let e = entropy_by_tag("gl_wave").unwrap();
        let p = builtin_by_tag("gl").unwrap();
        let samples = sample_box(&[-2.0, -2.0], &[2.0, 2.0], 21, 500, 4);
        let r = check_punctual(&e, p.as_ref(), &samples, EntropyKind::Sym).unwrap();
        assert!(r.criterion_ok, "{r:?}");
        assert!(r.max_equality_gap <= 1e-10);
        let s = check_saturation(&e, p.as_ref(), 0.0, &[0.0, -1.0], &[0.0, 1.0]).unwrap();
        assert!(s.saturated && (s.phi_jump - 4.0 / 3.0).abs() < 1e-12, "{s:?}");
        let same = check_saturation(&e, p.as_ref(), 0.0, &[0.0, 1.0], &[0.0, 1.0]).unwrap();
        assert_eq!(same.gap, 0.0);
    }

    #[test]
    fn calibration_depends_only_on_boundary_slices() {
        let e = entropy_by_tag("gl_wave").unwrap();
        let g = CylinderGrid::new(2, 3.0, 32, 16).unwrap();
        let c = Field::constant(g, &[0.0, 1.0]);
        assert!(calibration_value(&e, &c).unwrap().abs() < 1e-14);
        let mut s = StreamFunction::new(g, 0.0, -1.0, 1.0).unwrap();
        let base = calibration_value(&e, &from_stream(&s)).unwrap();
        assert!((base - 4.0 / 3.0).abs() < 1e-12);
        let mut rng = seeded_rng(3, 0);
        s.psi.iter_mut().for_each(|v| *v = rng.gen_range(-0.1..0.1));
        s.enforce_collar();
        let moved = calibration_value(&e, &from_stream(&s)).unwrap();
        assert!((moved - base).abs() <= 1e-10);
    }

    #[test]
    fn pde_residual_vanishes_on_constants_and_shrinks_on_the_layer() {
        let e = entropy_by_tag("gl_wave").unwrap();
        let p = builtin_by_tag("gl").unwrap();
        let g = CylinderGrid::new(2, 6.0, 32, 8).unwrap();
        let r = pde_residual(&e, p.as_ref(), &Field::constant(g, &[0.0, 1.0]), EntropyKind::Sym).unwrap();
        assert!(r.total() <= 1e-14);
        let mut prev = f64::INFINITY;
        for n1 in [64, 128, 256] {
            let g = CylinderGrid::new(2, 6.0, n1, 8).unwrap();
            let f = Field::from_profile(g, (vec![0.0, -1.0], vec![0.0, 1.0]), |x| vec![0.0, x.tanh()]);
            let r = pde_residual(&e, p.as_ref(), &f, EntropyKind::Sym).unwrap();
            assert!(r.defect_l2 < prev / 3.0);
            assert!(r.equipartition_l2 < 1e-12);
            prev = r.defect_l2;
        }
    }

    #[test]
    fn unknown_entropy_tag_is_rejected() {
        assert!(entropy_by_tag("nope").is_err());
    }
}
