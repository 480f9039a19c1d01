use serde::{Deserialize, Serialize};

use super::{Path, Profile1D};
use crate::error::{LabError, Result};
use crate::numeric::dist;
use crate::potential::Potential;

/// Stepping controls for the profile ODE.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OdeOptions {
    pub dt: f64,
    /// Distance to the end well at which integration stops.
    pub attach_tol: f64,
    /// Step cap per direction; hitting it means the profile does not attach.
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            dt: 5e-4,
            attach_tol: 1e-8,
            max_steps: 400_000,
        }
    }
}

/// Solves φ′ = √(2W(a, φ)) from the midpoint of `[y_minus, y_plus]` in both
/// directions and returns the profile t ↦ (a, φ(t)).
pub fn solve_profile_ode(
    p: &dyn Potential,
    a: f64,
    y_minus: f64,
    y_plus: f64,
    opts: &OdeOptions,
) -> Result<Profile1D> {
    if p.dim() != 2 {
        return Err(LabError::Dimension {
            expected: 2,
            got: p.dim(),
        });
    }
    let zm = vec![a, y_minus];
    let zp = vec![a, y_plus];
    let tol = p.well_tolerance();
    for z in [&zm, &zp] {
        if p.eval(z) > tol {
            return Err(LabError::InvalidArgument(format!(
                "end point {z:?} is not a well (W = {:e})",
                p.eval(z)
            )));
        }
    }
    let path = Path::segment(&zm, &zp, 1, Some(a));
    reparametrize_equipartition_with(p, &path, opts)
}

/// Reparametrizes a path so that ½|γ̇|² = W(γ), using the time change
/// dσ/dt = √(2W(γ(σ))) in arc length σ.
pub fn reparametrize_equipartition(p: &dyn Potential, path: &Path) -> Result<Profile1D> {
    reparametrize_equipartition_with(p, path, &OdeOptions::default())
}

fn reparametrize_equipartition_with(
    p: &dyn Potential,
    path: &Path,
    opts: &OdeOptions,
) -> Result<Profile1D> {
    let clean = path.cleaned();
    let s_nodes = clean.arc_lengths();
    let total = *s_nodes.last().unwrap();
    let a = clean.points[0][0];
    let first = clean.points[0].clone();
    let last = clean.points[clean.points.len() - 1].clone();
    if total == 0.0 {
        return Ok(Profile1D::constant(first));
    }
    let at = |s: f64| clean.at_arc_length(&s_nodes, s.clamp(0.0, total));
    let speed = |s: f64| p.speed(&at(s));

    check_interior_positive(&speed, total, p.well_tolerance())?;

    let mid = 0.5 * total;
    let (fwd, fwd_ok) = integrate(&speed, mid, total, 1.0, opts);
    let (bwd, bwd_ok) = integrate(&speed, mid, total, -1.0, opts);
    let mut t_samples = Vec::with_capacity(fwd.len() + bwd.len());
    let mut sigma = Vec::with_capacity(fwd.len() + bwd.len());
    for (t, s) in bwd.iter().rev() {
        t_samples.push(-t);
        sigma.push(*s);
    }
    for (t, s) in fwd.iter().skip(1) {
        t_samples.push(*t);
        sigma.push(*s);
    }
    let mut values: Vec<Vec<f64>> = sigma.iter().map(|&s| at(s)).collect();
    let attached = fwd_ok && bwd_ok;
    if attached {
        let n = values.len();
        values[0] = first.clone();
        values[n - 1] = last.clone();
    }
    let mut prof = Profile1D {
        t_samples,
        values,
        a,
        wells: (first, last),
        attached,
        equipartition_residual: 0.0,
    };
    prof.equipartition_residual = equipartition_residual(p, &prof);
    Ok(prof)
}

/// Rejects paths along which the weight vanishes away from the ends.
fn check_interior_positive<F: Fn(f64) -> f64>(speed: &F, total: f64, tol: f64) -> Result<()> {
    let n = 4000;
    let h = total / n as f64;
    let vals: Vec<f64> = (0..=n).map(|k| speed(h * k as f64)).collect();
    let threshold = (2.0 * tol).sqrt().max(1e-10);
    for k in 2..(n - 1) {
        if vals[k] <= vals[k - 1] && vals[k] <= vals[k + 1] {
            // Golden-section refinement inside the bracket.
            let (mut lo, mut hi) = (h * (k - 1) as f64, h * (k + 1) as f64);
            let g = 0.5 * (5f64.sqrt() - 1.0);
            for _ in 0..80 {
                let x1 = hi - g * (hi - lo);
                let x2 = lo + g * (hi - lo);
                if speed(x1) < speed(x2) {
                    hi = x2;
                } else {
                    lo = x1;
                }
            }
            let s = 0.5 * (lo + hi);
            let m = speed(s);
            let edge = 2.0 * h;
            if m <= threshold && s > edge && s < total - edge {
                return Err(LabError::IntermediateWell {
                    y: s,
                    value: 0.5 * m * m,
                });
            }
        }
    }
    Ok(())
}

/// RK4 for dσ/dt = ±speed(σ) from the midpoint until the end is within
/// `attach_tol`. Returns (t, σ) samples and whether the end was reached.
fn integrate<F: Fn(f64) -> f64>(
    speed: &F,
    start: f64,
    total: f64,
    dir: f64,
    opts: &OdeOptions,
) -> (Vec<(f64, f64)>, bool) {
    let target = if dir > 0.0 { total } else { 0.0 };
    let rhs = |s: f64| dir * speed(s.clamp(0.0, total));
    let mut out = vec![(0.0, start)];
    let mut s = start;
    let dt = opts.dt;
    for step in 1..=opts.max_steps {
        let k1 = rhs(s);
        let k2 = rhs(s + 0.5 * dt * k1);
        let k3 = rhs(s + 0.5 * dt * k2);
        let k4 = rhs(s + dt * k3);
        s += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        s = s.clamp(0.0, total);
        out.push((dt * step as f64, s));
        if (target - s).abs() < opts.attach_tol {
            return (out, true);
        }
    }
    (out, false)
}

fn equipartition_residual(p: &dyn Potential, prof: &Profile1D) -> f64 {
    let t = &prof.t_samples;
    let v = &prof.values;
    let mut worst: f64 = 0.0;
    for k in 1..t.len().saturating_sub(1) {
        let dt = t[k + 1] - t[k - 1];
        let vel = dist(&v[k + 1], &v[k - 1]) / dt;
        worst = worst.max((0.5 * vel * vel - p.eval(&v[k])).abs());
    }
    worst
}

/// ∫ ½|γ̇|² + W(γ) dt with piecewise-linear kinetic energy and trapezoidal W.
pub fn energy_1d(p: &dyn Potential, prof: &Profile1D) -> f64 {
    let t = &prof.t_samples;
    let v = &prof.values;
    let w: Vec<f64> = v.iter().map(|z| p.eval(z)).collect();
    let mut e = 0.0;
    for k in 0..t.len().saturating_sub(1) {
        let dt = t[k + 1] - t[k];
        if dt <= 0.0 {
            continue;
        }
        let dz = dist(&v[k], &v[k + 1]);
        e += 0.5 * dz * dz / dt + 0.5 * (w[k] + w[k + 1]) * dt;
    }
    e
}

/// Profile sampled from a closed form on a uniform grid; used by tests and
/// the cylinder initializer.
pub fn sample_profile<F: Fn(f64) -> Vec<f64>>(f: F, t0: f64, t1: f64, n: usize) -> Profile1D {
    let t_samples: Vec<f64> = (0..=n).map(|k| t0 + (t1 - t0) * k as f64 / n as f64).collect();
    let values: Vec<Vec<f64>> = t_samples.iter().map(|&t| f(t)).collect();
    Profile1D {
        a: values[0][0],
        wells: (values[0].clone(), values[n].clone()),
        t_samples,
        values,
        attached: false,
        equipartition_residual: f64::NAN,
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{builtin_by_tag, FnPotential};

    fn max_tanh_error(prof: &Profile1D, b: f64) -> f64 {
        prof.t_samples
            .iter()
            .zip(&prof.values)
            .map(|(&t, z)| (z[1] - b * (b * t).tanh()).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn gl_profile_is_tanh() {
        let gl = builtin_by_tag("gl").unwrap();
        let prof = solve_profile_ode(gl.as_ref(), 0.0, -1.0, 1.0, &OdeOptions::default()).unwrap();
        assert!(prof.attached);
        assert!(max_tanh_error(&prof, 1.0) < 1e-6);
        assert!(prof.equipartition_residual < 1e-6);
        assert!((energy_1d(gl.as_ref(), &prof) - 4.0 / 3.0).abs() < 1e-4);
    }

    #[test]
    fn off_centre_slice_profile() {
        let gl = builtin_by_tag("gl").unwrap();
        let prof = solve_profile_ode(gl.as_ref(), 0.6, -0.8, 0.8, &OdeOptions::default()).unwrap();
        assert!(max_tanh_error(&prof, 0.8) < 1e-6);
        assert!(prof.values.iter().all(|z| z[0] == 0.6));
    }

    #[test]
    fn interior_zero_is_reported() {
        let p = FnPotential::new(2, "three-well", |z: &[f64]| {
            let y = z[1];
            0.5 * (y * (1.0 - y * y)).powi(2)
        });
        let e = solve_profile_ode(&p, 0.0, -1.0, 1.0, &OdeOptions::default());
        assert!(matches!(e, Err(LabError::IntermediateWell { .. })), "{e:?}");
    }

    #[test]
    fn degenerate_wells_do_not_attach() {
        let p = FnPotential::new(2, "quartic", |z: &[f64]| 0.5 * (1.0 - z[1] * z[1]).powi(4));
        let opts = OdeOptions {
            max_steps: 20_000,
            ..Default::default()
        };
        let prof = solve_profile_ode(&p, 0.0, -1.0, 1.0, &opts).unwrap();
        assert!(!prof.attached);
        assert!(prof.truncated(&p));
    }

    #[test]
    fn equipartition_energy_equals_weighted_length() {
        let gl = builtin_by_tag("gl").unwrap();
        let path = Path::segment(&[0.0, -1.0], &[0.0, 1.0], 50, Some(0.0));
        let prof = reparametrize_equipartition(gl.as_ref(), &path).unwrap();
        let e = energy_1d(gl.as_ref(), &prof);
        let l = super::super::path_length(gl.as_ref(), &path);
        assert!(((e - l) / l).abs() < 1e-6, "{e} vs {l}");
        assert!(max_tanh_error(&prof, 1.0) < 1e-6);
    }

    #[test]
    fn constant_path_has_zero_energy() {
        let gl = builtin_by_tag("gl").unwrap();
        let path = Path::new(vec![vec![0.0, 1.0], vec![0.0, 1.0]], Some(0.0));
        let prof = reparametrize_equipartition(gl.as_ref(), &path).unwrap();
        assert_eq!(energy_1d(gl.as_ref(), &prof), 0.0);
        let well = Profile1D::constant(vec![0.0, -1.0]);
        assert_eq!(energy_1d(gl.as_ref(), &well), 0.0);
    }

    #[test]
    fn w3_slice_path_equipartition() {
        let w3 = builtin_by_tag("wd3").unwrap();
        let path = Path::segment(&[0.0, -1.0, 0.0], &[0.0, 1.0, 0.0], 40, Some(0.0));
        let prof = reparametrize_equipartition(w3.as_ref(), &path).unwrap();
        assert!(prof.equipartition_residual <= 1e-6);
    }
}
