use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::lbfgs::{minimize_lbfgs, LbfgsOptions, Objective};
use crate::numeric::seeded_rng;
use crate::potential::Potential;

/// A map from the periodic torus grid 𝕋^{d−1} to ℝ^d with prescribed mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusSlice {
    /// Torus dimension d − 1.
    pub torus_dim: usize,
    pub np: usize,
    /// Node-major values, d components per node.
    pub v: Vec<f64>,
    pub mean: Vec<f64>,
}

impl TorusSlice {
    pub fn constant(torus_dim: usize, np: usize, z: &[f64]) -> Self {
        let n = np.pow(torus_dim as u32);
        Self {
            torus_dim,
            np,
            v: z.iter().copied().cycle().take(n * z.len()).collect(),
            mean: z.to_vec(),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.np.pow(self.torus_dim as u32)
    }

    /// Component-wise average of the nodal values.
    pub fn average(&self) -> Vec<f64> {
        average(&self.v, self.mean.len())
    }

    /// Discrete ∫ ½|∇′v|² + W(v) with forward periodic differences.
    pub fn energy(&self, p: &dyn Potential) -> f64 {
        torus_energy(p, self.torus_dim, self.np, &self.v, None)
    }
}

fn average(v: &[f64], d: usize) -> Vec<f64> {
    let n = (v.len() / d) as f64;
    let mut m = vec![0.0; d];
    for c in v.chunks_exact(d) {
        m.iter_mut().zip(c).for_each(|(a, b)| *a += b);
    }
    m.iter_mut().for_each(|a| *a /= n);
    m
}

fn torus_energy(p: &dyn Potential, td: usize, np: usize, v: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
    let d = p.dim();
    let n = np.pow(td as u32);
    let h = 1.0 / np as f64;
    let cell = h.powi(td as i32);
    if let Some(g) = grad.as_deref_mut() {
        g.iter_mut().for_each(|x| *x = 0.0);
    }
    let mut gw = vec![0.0; d];
    let mut e = 0.0;
    for j in 0..n {
        let u = &v[j * d..(j + 1) * d];
        e += cell * p.eval(u);
        if let Some(g) = grad.as_deref_mut() {
            p.grad(u, &mut gw);
            for c in 0..d {
                g[j * d + c] += cell * gw[c];
            }
        }
        for k in 0..td {
            let stride = np.pow(k as u32);
            let ck = (j / stride) % np;
            let jn = j - ck * stride + ((ck + 1) % np) * stride;
            for c in 0..d {
                let diff = (v[jn * d + c] - u[c]) / h;
                e += cell * 0.5 * diff * diff;
                if let Some(g) = grad.as_deref_mut() {
                    g[j * d + c] -= cell * diff / h;
                    g[jn * d + c] += cell * diff / h;
                }
            }
        }
    }
    e
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EffectiveOptions {
    /// Nodes per torus direction.
    pub np: usize,
    /// Random starts in addition to the constant map.
    pub restarts: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for EffectiveOptions {
    fn default() -> Self {
        Self {
            np: 16,
            restarts: 4,
            seed: 0,
            max_iter: 800,
            tol: 1e-8,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EffectiveResult {
    /// min over the explored competitors, never above W(z).
    pub value: f64,
    pub minimizer: TorusSlice,
    /// Every run reached the gradient tolerance.
    pub converged: bool,
}

struct MeanConstrained<'a> {
    p: &'a dyn Potential,
    td: usize,
    np: usize,
    mean: Vec<f64>,
}

impl Objective for MeanConstrained<'_> {
    fn dim(&self) -> usize {
        self.np.pow(self.td as u32) * self.mean.len()
    }

    fn value_and_gradient(&self, x: &[f64], g: &mut [f64]) -> f64 {
        torus_energy(self.p, self.td, self.np, x, Some(g))
    }

    fn project_point(&self, x: &mut [f64]) {
        let d = self.mean.len();
        let m = average(x, d);
        for c in x.chunks_exact_mut(d) {
            for k in 0..d {
                c[k] += self.mean[k] - m[k];
            }
        }
    }

    fn project_gradient(&self, g: &mut [f64]) {
        let d = self.mean.len();
        let m = average(g, d);
        for c in g.chunks_exact_mut(d) {
            c.iter_mut().zip(&m).for_each(|(a, b)| *a -= b);
        }
    }

    fn gradient_norm_scale(&self) -> f64 {
        (self.np as f64).powf(self.td as f64 / 2.0)
    }
}

/// V(z) = inf { ∫_{𝕋^{d−1}} ½|∇′v|² + W(v) : ⨍v = z }, approximated on a
/// torus grid by descent on the zero-mean part from the constant map and
/// seeded random starts.
pub fn effective_potential_v(
    p: &dyn Potential,
    a: f64,
    z: &[f64],
    opts: &EffectiveOptions,
) -> Result<EffectiveResult> {
    let d = p.dim();
    if z.len() != d {
        return Err(LabError::Dimension {
            expected: d,
            got: z.len(),
        });
    }
    if (z[0] - a).abs() > 1e-12 {
        return Err(LabError::InvalidArgument(format!("z₁ = {} is off the slice {a}", z[0])));
    }
    if d < 2 || opts.np < 2 {
        return Err(LabError::InvalidArgument("need d ≥ 2 and np ≥ 2".into()));
    }
    let td = d - 1;
    let obj = MeanConstrained {
        p,
        td,
        np: opts.np,
        mean: z.to_vec(),
    };
    let constant = TorusSlice::constant(td, opts.np, z);
    let mut best = EffectiveResult {
        value: p.eval(z),
        minimizer: constant.clone(),
        converged: true,
    };
    let lopts = LbfgsOptions {
        max_iter: opts.max_iter,
        tol: opts.tol,
        trace_every: 0,
        ..LbfgsOptions::default()
    };
    let mut rng = seeded_rng(opts.seed, 23);
    for r in 0..opts.restarts {
        let mut x = constant.v.clone();
        let amp = 0.5 * (r + 1) as f64 / opts.restarts as f64;
        x.iter_mut().for_each(|v| *v += amp * rng.gen_range(-1.0..1.0));
        let res = minimize_lbfgs(&obj, x, &lopts);
        best.converged &= res.converged;
        if res.value < best.value {
            best.value = res.value;
            best.minimizer = TorusSlice {
                torus_dim: td,
                np: opts.np,
                v: res.x,
                mean: z.to_vec(),
            };
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::builtin_by_tag;

    #[test]
    fn wells_have_zero_effective_potential() {
        let p = builtin_by_tag("gl").unwrap();
        for z in [[0.0, 1.0], [0.0, -1.0]] {
            let r = effective_potential_v(p.as_ref(), 0.0, &z, &EffectiveOptions::default()).unwrap();
            assert!(r.value <= 1e-6);
        }
    }

    #[test]
    fn gl_origin_is_bounded_by_constant_competitor() {
        let p = builtin_by_tag("gl").unwrap();
        let r = effective_potential_v(p.as_ref(), 0.0, &[0.0, 0.0], &EffectiveOptions::default()).unwrap();
        assert!(r.value > 0.0 && r.value <= 0.5);
        let avg = r.minimizer.average();
        assert!(avg.iter().all(|v| v.abs() <= 1e-12));
        assert!((r.minimizer.energy(p.as_ref()) - r.value).abs() < 1e-12);
    }

    #[test]
    fn off_slice_point_is_rejected() {
        let p = builtin_by_tag("gl").unwrap();
        assert!(effective_potential_v(p.as_ref(), 0.5, &[0.0, 0.0], &EffectiveOptions::default()).is_err());
    }

    #[test]
    fn three_dimensional_torus_mean_is_kept() {
        let p = builtin_by_tag("wd3").unwrap();
        let z = [0.0, 0.3, 0.2];
        let opts = EffectiveOptions {
            np: 8,
            restarts: 2,
            ..EffectiveOptions::default()
        };
        let r = effective_potential_v(p.as_ref(), 0.0, &z, &opts).unwrap();
        assert!(r.value <= p.eval(&z) + 1e-12 && r.value > 0.0);
        let avg = r.minimizer.average();
        for k in 0..3 {
            assert!((avg[k] - z[k]).abs() <= 1e-12);
        }
    }
}
