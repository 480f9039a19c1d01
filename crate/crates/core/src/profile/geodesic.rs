use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Path;
use crate::error::{LabError, Result};
use crate::numeric::{adaptive_simpson, dist, dot, lerp, seeded_rng};
use crate::potential::Potential;

/// Where competitor curves may live.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathSpace {
    /// The hyperplane {z₁ = a}.
    Slice(f64),
    Ambient,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GeodesicOptions {
    /// Final number of path intervals.
    pub n_nodes: usize,
    /// Total number of starts: the straight segment plus randomized bends.
    pub n_restarts: usize,
    /// Descent iterations per refinement level.
    pub max_iter: usize,
    pub seed: u64,
    /// Extra user-supplied starting paths.
    #[serde(skip)]
    pub initial_paths: Vec<Path>,
}

impl Default for GeodesicOptions {
    fn default() -> Self {
        Self {
            n_nodes: 400,
            n_restarts: 5,
            max_iter: 1500,
            seed: 0,
            initial_paths: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GeodesicResult {
    /// Length of the returned polyline, integrated accurately; an upper bound
    /// on the geodesic pseudo-distance.
    pub cost: f64,
    /// Trapezoidal node sum of the same polyline.
    pub discrete_cost: f64,
    pub path: Path,
    pub converged: bool,
    pub n_nodes: usize,
}

/// ∫ √(2W(a,y)) dy between `y_minus` and `y_plus` (absolute tolerance 1e−9).
pub fn geodesic_cost_2d(p: &dyn Potential, a: f64, y_minus: f64, y_plus: f64) -> Result<f64> {
    if p.dim() != 2 {
        return Err(LabError::Dimension {
            expected: 2,
            got: p.dim(),
        });
    }
    let (lo, hi) = if y_minus <= y_plus {
        (y_minus, y_plus)
    } else {
        (y_plus, y_minus)
    };
    let f = |y: f64| p.speed(&[a, y]);
    // Splitting into panels keeps the adaptive rule away from spurious early exits.
    let panels = 16;
    let h = (hi - lo) / panels as f64;
    Ok((0..panels)
        .map(|k| {
            let x0 = lo + h * k as f64;
            adaptive_simpson(&f, x0, x0 + h, 1e-9 / panels as f64 / 15.0)
        })
        .sum())
}

/// Trapezoidal length Σ ½(√(2W(γ_k)) + √(2W(γ_{k+1})))·|γ_{k+1} − γ_k|.
pub fn discrete_length(p: &dyn Potential, path: &Path) -> f64 {
    let m: Vec<f64> = path.points.iter().map(|z| p.speed(z)).collect();
    path.points
        .windows(2)
        .zip(m.windows(2))
        .map(|(z, w)| 0.5 * (w[0] + w[1]) * dist(&z[0], &z[1]))
        .sum()
}

/// Weighted length ∫ √(2W(γ)) |dγ| of the polyline, segment by segment with
/// adaptive quadrature.
pub fn path_length(p: &dyn Potential, path: &Path) -> f64 {
    let nseg = path.points.len().saturating_sub(1).max(1);
    let tol = 1e-10 / nseg as f64;
    path.points
        .windows(2)
        .map(|w| {
            let len = dist(&w[0], &w[1]);
            if len == 0.0 {
                return 0.0;
            }
            let f = |t: f64| p.speed(&lerp(&w[0], &w[1], t));
            len * adaptive_simpson(&f, 0.0, 1.0, tol / len)
        })
        .sum()
}

/// Minimizes the discrete weighted length between two points by normal
/// gradient descent with equal arc-length redistribution, node doubling and
/// multi-start.
pub fn geodesic_cost(
    p: &dyn Potential,
    space: PathSpace,
    z_minus: &[f64],
    z_plus: &[f64],
    opts: &GeodesicOptions,
) -> Result<GeodesicResult> {
    let d = p.dim();
    if z_minus.len() != d || z_plus.len() != d {
        return Err(LabError::Dimension {
            expected: d,
            got: z_minus.len().min(z_plus.len()),
        });
    }
    let slice = match space {
        PathSpace::Slice(a) => {
            if z_minus[0] != a || z_plus[0] != a {
                return Err(LabError::InvalidArgument(
                    "endpoints must lie on the declared slice".into(),
                ));
            }
            Some(a)
        }
        PathSpace::Ambient => None,
    };
    if dist(z_minus, z_plus) == 0.0 {
        return Ok(GeodesicResult {
            cost: 0.0,
            discrete_cost: 0.0,
            path: Path::new(vec![z_minus.to_vec(), z_plus.to_vec()], slice),
            converged: true,
            n_nodes: 1,
        });
    }

    let mut starts: Vec<Path> = Vec::new();
    starts.push(Path::segment(z_minus, z_plus, 8, slice));
    let free = if slice.is_some() { d - 1 } else { d };
    if free > 1 {
        for r in 1..opts.n_restarts.max(1) {
            let mut rng = seeded_rng(opts.seed, r as u64);
            starts.push(bent_start(z_minus, z_plus, slice, &mut rng));
        }
    }
    for seedpath in &opts.initial_paths {
        let mut q = seedpath.clone();
        q.constrained_slice = slice;
        if let Some(a) = slice {
            q.points.iter_mut().for_each(|z| z[0] = a);
        }
        let last = q.points.len() - 1;
        q.points[0] = z_minus.to_vec();
        q.points[last] = z_plus.to_vec();
        starts.push(q);
    }

    let results: Vec<GeodesicResult> = starts
        .into_par_iter()
        .map(|start| refine_and_descend(p, start, opts))
        .collect();
    let best = results
        .into_iter()
        .min_by(|a, b| a.cost.partial_cmp(&b.cost).unwrap())
        .expect("at least one start");
    Ok(best)
}

fn bent_start<R: Rng>(a: &[f64], b: &[f64], slice: Option<f64>, rng: &mut R) -> Path {
    let d = a.len();
    let chord: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let len = crate::numeric::norm(&chord);
    let first = if slice.is_some() { 1 } else { 0 };
    let mut v = vec![0.0; d];
    for x in v.iter_mut().skip(first) {
        *x = rng.gen_range(-1.0..1.0);
    }
    let proj = dot(&v, &chord) / (len * len);
    for i in 0..d {
        v[i] -= proj * chord[i];
    }
    let vn = crate::numeric::norm(&v).max(1e-300);
    let amp = rng.gen_range(0.15..0.75) * len;
    let n = 16;
    let pts = (0..=n)
        .map(|k| {
            let t = k as f64 / n as f64;
            let mut z = lerp(a, b, t);
            let bump = amp * (std::f64::consts::PI * t).sin() / vn;
            for i in 0..d {
                z[i] += bump * v[i];
            }
            z
        })
        .collect();
    Path::new(pts, slice)
}

fn refine_and_descend(p: &dyn Potential, start: Path, opts: &GeodesicOptions) -> GeodesicResult {
    let target = opts.n_nodes.max(2);
    let mut n = 25.min(target);
    let mut path = resample(&start, n);
    let mut converged;
    let mut prev_cost = f64::INFINITY;
    loop {
        let ok = descend(p, &mut path, opts.max_iter);
        converged = ok;
        let cost = path_length(p, &path);
        let change = (prev_cost - cost).abs();
        prev_cost = cost;
        if n >= target || change < 1e-5 {
            if n < target {
                // Report at the requested resolution even when already converged.
                path = resample(&path, target);
                descend(p, &mut path, opts.max_iter / 4);
            }
            break;
        }
        n = (2 * n).min(target);
        path = resample(&path, n);
    }
    let cost = path_length(p, &path);
    GeodesicResult {
        cost,
        discrete_cost: discrete_length(p, &path),
        n_nodes: path.points.len() - 1,
        path,
        converged,
    }
}

/// Equal arc-length resampling with `n` intervals.
fn resample(path: &Path, n: usize) -> Path {
    let clean = path.cleaned();
    let s = clean.arc_lengths();
    let total = *s.last().unwrap();
    let pts = (0..=n)
        .map(|k| {
            if k == n {
                return clean.points[clean.points.len() - 1].clone();
            }
            clean.at_arc_length(&s, total * k as f64 / n as f64)
        })
        .collect();
    Path::new(pts, path.constrained_slice)
}

/// Normal-gradient descent with Armijo backtracking; returns whether the
/// relative decrease stalled below tolerance before `max_iter`.
fn descend(p: &dyn Potential, path: &mut Path, max_iter: usize) -> bool {
    let n = path.points.len() - 1;
    if n < 2 {
        return true;
    }
    let d = path.dim();
    let first = if path.constrained_slice.is_some() { 1 } else { 0 };
    let mut cost = discrete_length(p, path);
    let mut alpha = 1e-2;
    let mut stall = 0;
    for _ in 0..max_iter {
        let g = normal_gradient(p, path, first);
        let gnorm2: f64 = g.iter().map(|v| dot(v, v)).sum();
        if gnorm2 < 1e-30 {
            return true;
        }
        let mut accepted = false;
        for _ in 0..40 {
            let mut trial = path.clone();
            for k in 1..n {
                for i in first..d {
                    trial.points[k][i] -= alpha * g[k][i];
                }
            }
            let tc = discrete_length(p, &trial);
            if tc <= cost - 1e-4 * alpha * gnorm2 {
                *path = resample(&trial, n);
                let new_cost = discrete_length(p, path);
                let rel = (cost - new_cost) / cost.abs().max(1e-300);
                cost = new_cost;
                accepted = true;
                alpha *= 2.0;
                if rel.abs() < 1e-12 {
                    stall += 1;
                } else {
                    stall = 0;
                }
                break;
            }
            alpha *= 0.5;
        }
        if !accepted || stall >= 10 {
            return true;
        }
    }
    false
}

fn normal_gradient(p: &dyn Potential, path: &Path, first: usize) -> Vec<Vec<f64>> {
    let n = path.points.len() - 1;
    let d = path.dim();
    let pts = &path.points;
    let m: Vec<f64> = pts.iter().map(|z| p.speed(z)).collect();
    let mut g = vec![vec![0.0; d]; n + 1];
    let mut dm = vec![0.0; d];
    for k in 1..n {
        let prev: Vec<f64> = (0..d).map(|i| pts[k][i] - pts[k - 1][i]).collect();
        let next: Vec<f64> = (0..d).map(|i| pts[k + 1][i] - pts[k][i]).collect();
        let lp = crate::numeric::norm(&prev).max(1e-300);
        let ln = crate::numeric::norm(&next).max(1e-300);
        p.speed_grad(&pts[k], &mut dm);
        for i in first..d {
            g[k][i] = 0.5 * dm[i] * (lp + ln) + 0.5 * (m[k - 1] + m[k]) * prev[i] / lp
                - 0.5 * (m[k] + m[k + 1]) * next[i] / ln;
        }
        let tangent: Vec<f64> = (0..d).map(|i| pts[k + 1][i] - pts[k - 1][i]).collect();
        let tn = crate::numeric::norm(&tangent);
        if tn > 0.0 {
            let c = dot(&g[k], &tangent) / (tn * tn);
            for i in first..d {
                g[k][i] -= c * tangent[i];
            }
        }
    }
    g
}
