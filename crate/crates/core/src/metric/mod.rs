//! Finite pseudo-metrics, their cut decompositions, smooth calibrations of
//! cut metrics on affine bases, and the multi-well weight they assemble.

mod calibration;
mod smooth;
mod weight;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

pub use calibration::{audit_lambda0, calibration_phi, choose_lambda0, CalibrationFn, Lambda0Audit};
pub use smooth::{max_slope, smooth_g, Jet, MAX_DIM};
pub use weight::{
    build_weight_w, verify_segment_optimality, weight_grid_csv, weighted_length, MetricWeight, PairAudit, SegmentAudit,
    SegmentAuditOptions,
};

/// Points x₀, …, x_{n−1} in ℝ^d with a pseudo-metric δ on them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiniteMetric {
    pub points: Vec<Vec<f64>>,
    pub delta: Vec<Vec<f64>>,
}

impl FiniteMetric {
    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    /// True when n = d + 1 and the differences x_i − x₀ are independent.
    pub fn is_affine_basis(&self) -> bool {
        let d = self.dim();
        if self.n() != d + 1 || d == 0 || self.points.iter().any(|p| p.len() != d) {
            return false;
        }
        let m = DMatrix::from_fn(d, d, |r, c| self.points[c + 1][r] - self.points[0][r]);
        let svd = m.svd(false, false);
        let smax = svd.singular_values.max();
        smax > 0.0 && svd.singular_values.min() > 1e-10 * smax
    }
}

/// Outcome of [`validate_pseudo_metric`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricReport {
    pub valid: bool,
    pub symmetric: bool,
    pub zero_diagonal: bool,
    pub nonnegative: bool,
    /// Largest δ(x,y) − δ(x,z) − δ(z,y) over all triples.
    pub max_triangle_violation: f64,
    /// (x, y, z) attaining it, when positive.
    pub worst_triple: Option<(usize, usize, usize)>,
}

const METRIC_TOL: f64 = 1e-12;

pub fn validate_pseudo_metric(delta: &[Vec<f64>]) -> MetricReport {
    let n = delta.len();
    let square = delta.iter().all(|r| r.len() == n);
    if !square {
        return MetricReport {
            valid: false,
            symmetric: false,
            zero_diagonal: false,
            nonnegative: false,
            max_triangle_violation: f64::INFINITY,
            worst_triple: None,
        };
    }
    let mut symmetric = true;
    let mut zero_diagonal = true;
    let mut nonnegative = true;
    for i in 0..n {
        zero_diagonal &= delta[i][i].abs() <= METRIC_TOL;
        for j in 0..n {
            symmetric &= (delta[i][j] - delta[j][i]).abs() <= METRIC_TOL;
            nonnegative &= delta[i][j] >= -METRIC_TOL && delta[i][j].is_finite();
        }
    }
    let mut worst = 0.0;
    let mut triple = None;
    for x in 0..n {
        for y in 0..n {
            for z in 0..n {
                let v = delta[x][y] - delta[x][z] - delta[z][y];
                if v > worst {
                    worst = v;
                    triple = Some((x, y, z));
                }
            }
        }
    }
    MetricReport {
        valid: symmetric && zero_diagonal && nonnegative && worst <= METRIC_TOL,
        symmetric,
        zero_diagonal,
        nonnegative,
        max_triangle_violation: worst,
        worst_triple: triple,
    }
}

/// δ_Y(x, y) = 1 when exactly one of x, y lies in Y.
pub fn cut_metric(y: &[usize], n: usize) -> Result<Vec<Vec<f64>>> {
    let mut inside = vec![false; n];
    for &k in y {
        if k >= n {
            return Err(LabError::InvalidArgument(format!("index {k} out of range")));
        }
        inside[k] = true;
    }
    let count = inside.iter().filter(|&&b| b).count();
    if count == 0 || count == n {
        return Err(LabError::InvalidArgument("Y must be a proper nonempty subset".into()));
    }
    Ok((0..n)
        .map(|i| (0..n).map(|j| if inside[i] != inside[j] { 1.0 } else { 0.0 }).collect())
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutWeight {
    /// The canonical representative of {Y, X∖Y}: the one containing x₀.
    pub subset: Vec<usize>,
    pub weight: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CutDecomposition {
    pub n: usize,
    /// Cuts with positive weight.
    pub cuts: Vec<CutWeight>,
    pub feasible: bool,
    /// max entry error of Σ λ_Y δ_Y − δ.
    pub residual: f64,
}

impl CutDecomposition {
    pub fn weight_of(&self, subset: &[usize]) -> f64 {
        let canon = canonical(subset, self.n);
        self.cuts.iter().find(|c| c.subset == canon).map_or(0.0, |c| c.weight)
    }

    pub fn reconstruct(&self) -> Vec<Vec<f64>> {
        let n = self.n;
        let mut out = vec![vec![0.0; n]; n];
        for c in &self.cuts {
            let m = cut_metric(&c.subset, n).expect("stored cuts are proper");
            for i in 0..n {
                for j in 0..n {
                    out[i][j] += c.weight * m[i][j];
                }
            }
        }
        out
    }
}

fn canonical(subset: &[usize], n: usize) -> Vec<usize> {
    let mut s: Vec<usize> = subset.to_vec();
    s.sort_unstable();
    s.dedup();
    if s.first() == Some(&0) {
        s
    } else {
        (0..n).filter(|k| !s.contains(k)).collect()
    }
}

/// Feasibility threshold on the reconstruction error.
pub const CUT_TOL: f64 = 1e-9;

/// Largest n accepted by [`decompose_cuts`].
pub const MAX_CUT_POINTS: usize = 12;

/// Writes δ as a nonnegative combination of cut metrics by nonnegative least
/// squares over the 2^{n−1} − 1 canonical cuts.
pub fn decompose_cuts(delta: &[Vec<f64>]) -> Result<CutDecomposition> {
    let n = delta.len();
    let report = validate_pseudo_metric(delta);
    if !report.valid {
        return Err(LabError::InvalidArgument(format!(
            "not a pseudo-metric (triangle violation {:e} at {:?})",
            report.max_triangle_violation, report.worst_triple
        )));
    }
    if n > MAX_CUT_POINTS {
        return Err(LabError::InvalidArgument(format!("at most {MAX_CUT_POINTS} points")));
    }
    if n < 2 {
        return Ok(CutDecomposition {
            n,
            cuts: Vec::new(),
            feasible: true,
            residual: 0.0,
        });
    }
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let subsets: Vec<Vec<usize>> = (0..(1usize << (n - 1)) - 1)
        .map(|mask| {
            let mut s = vec![0];
            s.extend((1..n).filter(|k| mask >> (k - 1) & 1 == 1));
            s
        })
        .collect();
    let a = DMatrix::from_fn(pairs.len(), subsets.len(), |r, c| {
        let (i, j) = pairs[r];
        let s = &subsets[c];
        if s.contains(&i) != s.contains(&j) {
            1.0
        } else {
            0.0
        }
    });
    let b = DVector::from_iterator(pairs.len(), pairs.iter().map(|&(i, j)| delta[i][j]));
    let x = nnls(&a, &b, 1e-13)?;
    let cuts: Vec<CutWeight> = subsets
        .into_iter()
        .zip(x.iter())
        .filter(|(_, &w)| w > 0.0)
        .map(|(subset, &weight)| CutWeight { subset, weight })
        .collect();
    let mut dec = CutDecomposition {
        n,
        cuts,
        feasible: false,
        residual: 0.0,
    };
    let rec = dec.reconstruct();
    dec.residual = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| (rec[i][j] - delta[i][j]).abs())
        .fold(0.0, f64::max);
    dec.feasible = dec.residual <= CUT_TOL;
    Ok(dec)
}

/// Least squares for a matrix with independent columns via Householder QR,
/// with one step of iterative refinement.
fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let qr = a.clone().qr();
    let (q, r) = (qr.q(), qr.r());
    let solve = |rhs: &DVector<f64>| {
        r.solve_upper_triangular(&(q.transpose() * rhs))
            .ok_or_else(|| LabError::Solver("rank-deficient passive set".into()))
    };
    let z = solve(b)?;
    let correction = solve(&(b - a * &z))?;
    Ok(z + correction)
}

/// Lawson–Hanson active-set solver for min |Ax − b| subject to x ≥ 0.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>, tol: f64) -> Result<DVector<f64>> {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let scale = a.amax().max(1.0) * b.amax().max(1.0);
    // A column whose entry in w is rounding noise can be added and dropped
    // again without changing x; it is blocked until another column helps.
    let mut blocked = vec![false; n];
    let max_outer = 4 * n + 20;
    for _ in 0..max_outer {
        let r = b - a * &x;
        let before = r.norm();
        let w = a.transpose() * r;
        let candidate = (0..n)
            .filter(|&k| !passive[k] && !blocked[k])
            .max_by(|&p, &q| w[p].total_cmp(&w[q]));
        let added = match candidate {
            Some(k) if w[k] > tol * scale => k,
            _ => return Ok(x),
        };
        passive[added] = true;
        loop {
            let idx: Vec<usize> = (0..n).filter(|&k| passive[k]).collect();
            let sub = a.select_columns(&idx);
            let z_sub = least_squares(&sub, b)?;
            if z_sub.iter().all(|&v| v > 0.0) {
                for (p, &k) in idx.iter().enumerate() {
                    x[k] = z_sub[p];
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            let mut hit = idx[0];
            for (p, &k) in idx.iter().enumerate() {
                if z_sub[p] <= 0.0 {
                    let t = x[k] / (x[k] - z_sub[p]);
                    if t < alpha {
                        alpha = t;
                        hit = k;
                    }
                }
            }
            for (p, &k) in idx.iter().enumerate() {
                x[k] += alpha * (z_sub[p] - x[k]);
                if k == hit || x[k] <= tol * scale * 1e-3 {
                    x[k] = 0.0;
                    passive[k] = false;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
        if (b - a * &x).norm() < before * (1.0 - 1e-12) {
            blocked.iter_mut().for_each(|v| *v = false);
        } else {
            blocked[added] = true;
        }
    }
    Err(LabError::Solver("NNLS did not terminate".into()))
}
