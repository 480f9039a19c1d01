use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Entropy, EntropyKind};
use crate::error::{LabError, Result};
use crate::numeric::{rk4_step, seeded_rng};

/// Ψ_d(z) = −z₁z₂((z₁² + z₂²)/3 + |z″|² − 1) with z″ = (z₃, …, z_d).
pub fn psi_d(z: &[f64]) -> f64 {
    let (s, q) = split_norms(z);
    -z[0] * z[1] * (s / 3.0 + q - 1.0)
}

fn split_norms(z: &[f64]) -> (f64, f64) {
    let s = z[0] * z[0] + z[1] * z[1];
    let q: f64 = z[2..].iter().map(|v| v * v).sum();
    (s, q)
}

pub fn psi_d_gradient(z: &[f64]) -> Vec<f64> {
    let (z1, z2) = (z[0], z[1]);
    let (_, q) = split_norms(z);
    let mut g = Vec::with_capacity(z.len());
    g.push(-z2 * (z1 * z1 + z2 * z2 / 3.0 + q - 1.0));
    g.push(-z1 * (z1 * z1 / 3.0 + z2 * z2 + q - 1.0));
    g.extend(z[2..].iter().map(|zk| -2.0 * z1 * z2 * zk));
    g
}

/// Closed-form Hessian of Ψ_d; all diagonal entries equal −2z₁z₂.
pub fn psi_d_hessian(z: &[f64]) -> DMatrix<f64> {
    let d = z.len();
    let (z1, z2) = (z[0], z[1]);
    let r2: f64 = z.iter().map(|v| v * v).sum();
    let mut h = DMatrix::zeros(d, d);
    for i in 0..d {
        h[(i, i)] = -2.0 * z1 * z2;
    }
    h[(0, 1)] = 1.0 - r2;
    h[(1, 0)] = 1.0 - r2;
    for k in 2..d {
        h[(0, k)] = -2.0 * z2 * z[k];
        h[(k, 0)] = h[(0, k)];
        h[(1, k)] = -2.0 * z1 * z[k];
        h[(k, 1)] = h[(1, k)];
    }
    h
}

/// Φ_d = ∇Ψ_d, a symmetric-gradient entropy for W_d = ¼|Π₀∇²Ψ_d|².
pub fn entropy_phi_d(d: usize) -> Result<Entropy> {
    if d < 2 {
        return Err(LabError::InvalidArgument("Ψ_d needs d ≥ 2".into()));
    }
    let check = move |z: &[f64]| assert_eq!(z.len(), d, "point dimension");
    Ok(Entropy::new(
        d,
        EntropyKind::Sym,
        format!("phi{d}"),
        move |z| {
            check(z);
            psi_d_gradient(z)
        },
        psi_d_hessian,
    ))
}

/// Ψ(z) = ½(Ψ̄(z₁, …, z_{d−2}, z_{d−1} + z_d) + Ψ̄(z₁, …, z_{d−2}, z_{d−1} − z_d)).
pub fn psi_extend<F>(psi_bar: F) -> impl Fn(&[f64]) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    move |z: &[f64]| {
        let d = z.len();
        let mut y = z[..d - 1].to_vec();
        y[d - 2] = z[d - 2] + z[d - 1];
        let a = psi_bar(&y);
        y[d - 2] = z[d - 2] - z[d - 1];
        0.5 * (a + psi_bar(&y))
    }
}

/// Φ(z) = αz + β; its traceless Jacobian vanishes.
pub fn affine_homothety_entropy(d: usize, alpha: f64, beta: &[f64]) -> Entropy {
    let b = beta.to_vec();
    Entropy::new(
        d,
        EntropyKind::Strong,
        "homothety",
        move |z| z.iter().zip(&b).map(|(zi, bi)| alpha * zi + bi).collect(),
        move |_| DMatrix::identity(d, d) * alpha,
    )
}

/// Φⁱ(z) = Φⁱ(0) + (Lz)ᵢ + Σⱼ (cⱼzⱼzᵢ − cᵢzⱼ²/2), whose traceless Jacobian
/// L + z⊗c − c⊗z is antisymmetric.
pub fn asym_rigidity_entropy(c: &[f64], l: &DMatrix<f64>, phi0: &[f64]) -> Result<Entropy> {
    let d = c.len();
    if d < 3 || l.nrows() != d || l.ncols() != d || phi0.len() != d {
        return Err(LabError::InvalidArgument(
            "need d ≥ 3 with matching c, L and Φ(0)".into(),
        ));
    }
    if (l + l.transpose()).amax() > 1e-12 {
        return Err(LabError::InvalidArgument("L must be antisymmetric".into()));
    }
    let (c1, l1, p1) = (c.to_vec(), l.clone(), phi0.to_vec());
    let (c2, l2) = (c.to_vec(), l.clone());
    Ok(Entropy::new(
        d,
        EntropyKind::Asym,
        "asym_quadratic",
        move |z| {
            let cz: f64 = c1.iter().zip(z).map(|(a, b)| a * b).sum();
            let zz: f64 = z.iter().map(|v| v * v).sum();
            (0..d)
                .map(|i| {
                    let lz: f64 = (0..d).map(|j| l1[(i, j)] * z[j]).sum();
                    p1[i] + lz + cz * z[i] - 0.5 * c1[i] * zz
                })
                .collect()
        },
        move |z| {
            let cz: f64 = c2.iter().zip(z).map(|(a, b)| a * b).sum();
            DMatrix::from_fn(d, d, |i, k| {
                let diag = if i == k { cz } else { 0.0 };
                l2[(i, k)] + c2[k] * z[i] - c2[i] * z[k] + diag
            })
        },
    ))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RigidityFit {
    pub n_coefficients: usize,
    pub n_constraints: usize,
    /// Dimension of the space of cubic maps with antisymmetric Π₀∇Φ.
    pub null_dim: usize,
    /// Dimension of the explicit family (constants, homotheties, L, c).
    pub family_dim: usize,
    /// Largest distance from a null-space vector to the family span.
    pub residual: f64,
    /// Largest constraint violation of a family member.
    pub family_defect: f64,
}

fn monomials(d: usize, deg: u32) -> Vec<Vec<u32>> {
    let mut out = vec![vec![]];
    for _ in 0..d {
        let mut next = Vec::new();
        for m in &out {
            let used: u32 = m.iter().sum();
            for p in 0..=(deg - used) {
                let mut e = m.clone();
                e.push(p);
                next.push(e);
            }
        }
        out = next;
    }
    out
}

fn mono_partial(e: &[u32], j: usize, z: &[f64]) -> f64 {
    if e[j] == 0 {
        return 0.0;
    }
    let mut v = e[j] as f64;
    for (k, &p) in e.iter().enumerate() {
        let p = if k == j { p - 1 } else { p };
        v *= z[k].powi(p as i32);
    }
    v
}

/// Finds every polynomial map ℝ³ → ℝ³ of degree ≤ 3 whose traceless
/// Jacobian is antisymmetric at random samples, and measures how far that
/// space is from the explicit quadratic family.
pub fn rigidity_regression(n_samples: usize, seed: u64) -> RigidityFit {
    let d = 3;
    let monos = monomials(d, 3);
    let nm = monos.len();
    let nc = d * nm;
    let mut rng = seeded_rng(seed, 53);
    let rows_per = d * (d - 1) / 2 + d;
    let mut a = DMatrix::zeros(n_samples * rows_per, nc);
    for s in 0..n_samples {
        let z: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.5..1.5)).collect();
        // dphi[(i, j, m)] = ∂_j mono_m for component i.
        let part: Vec<Vec<f64>> = (0..d)
            .map(|j| monos.iter().map(|e| mono_partial(e, j, &z)).collect())
            .collect();
        let mut r = s * rows_per;
        for i in 0..d {
            for j in i + 1..d {
                for m in 0..nm {
                    a[(r, i * nm + m)] += part[j][m];
                    a[(r, j * nm + m)] += part[i][m];
                }
                r += 1;
            }
        }
        for i in 0..d {
            for m in 0..nm {
                a[(r, i * nm + m)] += part[i][m];
                for k in 0..d {
                    a[(r, k * nm + m)] -= part[k][m] / d as f64;
                }
            }
            r += 1;
        }
    }
    let svd = a.clone().svd(false, true);
    let vt = svd.v_t.expect("right singular vectors");
    let smax = svd.singular_values.max();
    let mut null: Vec<DVector<f64>> = Vec::new();
    for k in 0..nc {
        let sv = if k < svd.singular_values.len() {
            svd.singular_values[k]
        } else {
            0.0
        };
        if sv <= 1e-9 * smax {
            null.push(vt.row(k).transpose());
        }
    }
    if svd.singular_values.len() < nc {
        // Wide systems are not expected with the default sample counts.
        null.clear();
    }

    let idx = |comp: usize, e: [u32; 3]| -> usize { comp * nm + monos.iter().position(|m| m[..] == e[..]).unwrap() };
    let mut family: Vec<DVector<f64>> = Vec::new();
    for i in 0..d {
        let mut v = DVector::zeros(nc);
        v[idx(i, [0, 0, 0])] = 1.0;
        family.push(v);
    }
    let unit = |k: usize| {
        let mut e = [0u32; 3];
        e[k] = 1;
        e
    };
    let mut v = DVector::zeros(nc);
    for i in 0..d {
        v[idx(i, unit(i))] = 1.0;
    }
    family.push(v);
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        let mut v = DVector::zeros(nc);
        v[idx(i, unit(j))] = 1.0;
        v[idx(j, unit(i))] = -1.0;
        family.push(v);
    }
    for k in 0..d {
        // c = e_k: Φⁱ = z_k zᵢ − δᵢₖ |z|²/2.
        let mut v = DVector::zeros(nc);
        for i in 0..d {
            let mut e = [0u32; 3];
            e[k] += 1;
            e[i] += 1;
            v[idx(i, e)] += 1.0;
        }
        for j in 0..d {
            let mut e = [0u32; 3];
            e[j] = 2;
            v[idx(k, e)] -= 0.5;
        }
        family.push(v);
    }
    let fam = DMatrix::from_columns(&family);
    let family_defect = (&a * &fam).amax();
    let qr = fam.clone().qr();
    let q = qr.q();
    let residual = null
        .iter()
        .map(|v| (v - &q * (q.transpose() * v)).norm())
        .fold(0.0, f64::max);
    RigidityFit {
        n_coefficients: nc,
        n_constraints: a.nrows(),
        null_dim: null.len(),
        family_dim: family.len(),
        residual,
        family_defect,
    }
}

/// Rest points of (v̇₂, v̇₃) = (b² − v₂² − v₃², −2v₂v₃).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedPoint {
    PlusE2,
    MinusE2,
    PlusE3,
    MinusE3,
}

impl FixedPoint {
    pub fn location(self, b: f64) -> [f64; 2] {
        match self {
            FixedPoint::PlusE2 => [b, 0.0],
            FixedPoint::MinusE2 => [-b, 0.0],
            FixedPoint::PlusE3 => [0.0, b],
            FixedPoint::MinusE3 => [0.0, -b],
        }
    }

    fn classify(v: [f64; 2], b: f64, tol: f64) -> Option<Self> {
        [FixedPoint::PlusE2, FixedPoint::MinusE2, FixedPoint::PlusE3, FixedPoint::MinusE3]
            .into_iter()
            .find(|p| {
                let l = p.location(b);
                ((v[0] - l[0]).powi(2) + (v[1] - l[1]).powi(2)).sqrt() <= tol
            })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Ode3dTrajectory {
    pub b: f64,
    pub t: Vec<f64>,
    pub v: Vec<[f64; 2]>,
    /// Integration stopped because |v| exceeded 10⁶.
    pub blew_up: bool,
    /// Rest point reached at the final time, if any (tolerance 10⁻⁴).
    pub omega_limit: Option<FixedPoint>,
    /// Rest point reached at the initial time, if any.
    pub alpha_limit: Option<FixedPoint>,
}

impl Ode3dTrajectory {
    /// Columns t, v2, v3.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,v2,v3\n");
        for (t, v) in self.t.iter().zip(&self.v) {
            s.push_str(&format!("{t:.10e},{:.15e},{:.15e}\n", v[0], v[1]));
        }
        s
    }

    /// Smallest and largest v₃ along the trajectory.
    pub fn v3_range(&self) -> (f64, f64) {
        self.v
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v[1]), hi.max(v[1])))
    }
}

const BLOW_UP: f64 = 1e6;

/// RK4 integration of (v̇₂, v̇₃) = (b² − v₂² − v₃², −2v₂v₃) from v(0) = v0
/// forward to t_span.1 and backward to t_span.0.
pub fn ode3d_solve(b: f64, v0: [f64; 2], t_span: (f64, f64), dt: f64) -> Result<Ode3dTrajectory> {
    if !(b > 0.0) || !(dt > 0.0) || t_span.0 > 0.0 || t_span.1 < 0.0 {
        return Err(LabError::InvalidArgument(
            "need b > 0, dt > 0 and t_span containing 0".into(),
        ));
    }
    let rhs = move |y: &[f64], out: &mut [f64]| {
        out[0] = b * b - y[0] * y[0] - y[1] * y[1];
        out[1] = -2.0 * y[0] * y[1];
    };
    let mut blew_up = false;
    let mut run = |t_end: f64, sign: f64| -> Vec<(f64, [f64; 2])> {
        let mut out = Vec::new();
        let mut y = [v0[0], v0[1]];
        let steps = (t_end.abs() / dt).ceil() as usize;
        let h = if steps > 0 { t_end.abs() / steps as f64 } else { 0.0 };
        let back = |y: &[f64], o: &mut [f64]| {
            rhs(y, o);
            o[0] *= sign;
            o[1] *= sign;
        };
        for k in 1..=steps {
            rk4_step(&back, &mut y, h);
            if !(y[0].abs() < BLOW_UP && y[1].abs() < BLOW_UP) {
                blew_up = true;
                break;
            }
            out.push((sign * h * k as f64, y));
        }
        out
    };
    let fwd = run(t_span.1, 1.0);
    let bwd = run(t_span.0, -1.0);
    let mut t = Vec::with_capacity(fwd.len() + bwd.len() + 1);
    let mut v = Vec::with_capacity(t.capacity());
    for (tt, vv) in bwd.iter().rev() {
        t.push(*tt);
        v.push(*vv);
    }
    t.push(0.0);
    v.push(v0);
    for (tt, vv) in &fwd {
        t.push(*tt);
        v.push(*vv);
    }
    let omega_limit = FixedPoint::classify(*v.last().unwrap(), b, 1e-4);
    let alpha_limit = FixedPoint::classify(v[0], b, 1e-4);
    Ok(Ode3dTrajectory {
        b,
        t,
        v,
        blew_up,
        omega_limit,
        alpha_limit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::{check_punctual, sample_box, traceless};
    use crate::potential::{builtin_wd, Potential};

    #[test]
    fn hessian_at_reference_point() {
        let h = psi_d_hessian(&[1.0, 1.0, 0.0]);
        for i in 0..3 {
            assert_eq!(h[(i, i)], -2.0);
        }
        assert_eq!((h[(0, 1)], h[(0, 2)], h[(1, 2)]), (-1.0, 0.0, 0.0));
        let t = traceless(&h);
        assert!((t.norm_squared() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn planar_case_matches_closed_form() {
        let mut rng = seeded_rng(2, 0);
        for _ in 0..100 {
            let (a, b): (f64, f64) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let want = -a * b * ((a * a + b * b) / 3.0 - 1.0);
            assert!((psi_d(&[a, b]) - want).abs() < 1e-14);
        }
    }

    #[test]
    fn extension_of_lower_dimension_matches_closed_form() {
        let mut rng = seeded_rng(3, 0);
        for d in 3..=5 {
            let ext = psi_extend(psi_d);
            for _ in 0..1000 {
                let z: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
                assert!((ext(&z) - psi_d(&z)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn phi_d_is_entropy_with_equality_for_w_d() {
        for d in 2..=4 {
            let e = entropy_phi_d(d).unwrap();
            let p = builtin_wd(d).unwrap();
            let lo = vec![-1.5; d];
            let hi = vec![1.5; d];
            let samples = sample_box(&lo, &hi, 0, 2000, d as u64);
            let r = check_punctual(&e, &p, &samples, EntropyKind::Sym).unwrap();
            assert!(r.criterion_ok && r.max_equality_gap <= 1e-10, "{r:?}");
            assert!(e.jacobian_defect(&samples[..100]) <= 1e-6);
            for z in &samples {
                let h = e.jac(z);
                let d0 = h[(0, 0)];
                assert!((0..d).all(|i| (h[(i, i)] - d0).abs() <= 1e-12));
                let w = 0.25 * traceless(&h).norm_squared();
                assert!((w - p.eval(z)).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn rigidity_family_has_antisymmetric_traceless_jacobian() {
        let mut rng = seeded_rng(4, 0);
        let zero = DMatrix::zeros(3, 3);
        let e = asym_rigidity_entropy(&[0.0; 3], &zero, &[0.0; 3]).unwrap();
        assert!(traceless(&e.jac(&[0.3, 0.1, -0.2])).amax() == 0.0);
        let mut l = DMatrix::zeros(3, 3);
        l[(0, 1)] = 0.7;
        l[(1, 0)] = -0.7;
        let e = asym_rigidity_entropy(&[1.0, 0.0, 0.0], &l, &[0.1, 0.2, 0.3]).unwrap();
        for _ in 0..100 {
            let z: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let t = traceless(&e.jac(&z));
            assert!((&t + t.transpose()).amax() <= 1e-12);
        }
        let samples = sample_box(&[-1.0; 3], &[1.0; 3], 0, 50, 9);
        assert!(e.jacobian_defect(&samples) <= 1e-6);
        assert!(asym_rigidity_entropy(&[1.0, 0.0], &DMatrix::zeros(2, 2), &[0.0, 0.0]).is_err());
    }

    #[test]
    fn cubic_regression_recovers_the_family() {
        let fit = rigidity_regression(40, 0);
        assert_eq!(fit.n_coefficients, 60);
        assert_eq!(fit.null_dim, fit.family_dim);
        assert!(fit.residual <= 1e-8 && fit.family_defect <= 1e-12, "{fit:?}");
    }

    #[test]
    fn tanh_connection_and_invariant_sets() {
        for b in [0.6, 0.8, 1.0] {
            let tr = ode3d_solve(b, [0.0, 0.0], (-8.0 / b, 8.0 / b), 1e-3).unwrap();
            let err = tr
                .t
                .iter()
                .zip(&tr.v)
                .map(|(t, v)| (v[0] - b * (b * t).tanh()).abs().max(v[1].abs()))
                .fold(0.0, f64::max);
            assert!(err <= 1e-6, "b={b}: {err}");
            assert_eq!(tr.omega_limit, Some(FixedPoint::PlusE2));
            assert_eq!(tr.alpha_limit, Some(FixedPoint::MinusE2));
        }
        let tr = ode3d_solve(1.0, [0.3, 0.7], (-6.0, 10.0), 1e-3).unwrap();
        assert!(tr.v.iter().all(|v| (v[0] + v[1] - 1.0).abs() <= 1e-8));
        assert_eq!(tr.omega_limit, Some(FixedPoint::PlusE2));
        assert_eq!(tr.alpha_limit, Some(FixedPoint::PlusE3));
    }

    #[test]
    fn blow_up_is_detected() {
        let tr = ode3d_solve(1.0, [-2.0, 0.0], (0.0, 10.0), 1e-3).unwrap();
        assert!(tr.blew_up);
        assert!(ode3d_solve(-1.0, [0.0, 0.0], (0.0, 1.0), 1e-3).is_err());
    }
}
