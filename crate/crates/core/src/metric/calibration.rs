use serde::{Deserialize, Serialize};

use super::smooth::{Jet, MAX_DIM};
use crate::error::{LabError, Result};
use crate::numeric::{dist, dot, norm};

/// Cap on the number of times λ₀ is halved during the automatic search.
pub const MAX_HALVINGS: usize = 20;

/// Separation margins for a candidate λ₀. Every margin must be positive for
/// the supports of the partition functions to overlap only at points of X.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Lambda0Audit {
    pub lambda0: f64,
    /// Cone half-angle θ with cos θ = 1 − λ₀.
    pub theta: f64,
    pub halvings: usize,
    /// min |x_i − x_j| − 2λ₀.
    pub ball_margin: f64,
    /// Smallest angle between two edges at a common vertex, minus 2θ.
    pub shared_vertex_margin: f64,
    /// Smallest distance between disjoint edges minus their lens half-widths.
    pub disjoint_edge_margin: f64,
    /// Smallest distance from a ball B(x_i, λ₀) to a lens of an edge avoiding i.
    pub ball_lens_margin: f64,
    pub passed: bool,
}

/// Distance from z to the segment [a, b].
pub(crate) fn segment_distance_point(z: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let (mut l2, mut proj) = (0.0, 0.0);
    for k in 0..z.len() {
        let ab = b[k] - a[k];
        l2 += ab * ab;
        proj += (z[k] - a[k]) * ab;
    }
    let t = if l2 > 0.0 { (proj / l2).clamp(0.0, 1.0) } else { 0.0 };
    (0..z.len())
        .map(|k| {
            let q = a[k] + t * (b[k] - a[k]);
            (z[k] - q) * (z[k] - q)
        })
        .sum::<f64>()
        .sqrt()
}

/// Distance between the segments [a, b] and [c, e].
pub(crate) fn segment_distance(a: &[f64], b: &[f64], c: &[f64], e: &[f64]) -> f64 {
    let u: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let v: Vec<f64> = c.iter().zip(e).map(|(x, y)| y - x).collect();
    let w: Vec<f64> = c.iter().zip(a).map(|(x, y)| y - x).collect();
    let (uu, uv, vv) = (dot(&u, &u), dot(&u, &v), dot(&v, &v));
    let (uw, vw) = (dot(&u, &w), dot(&v, &w));
    let den = uu * vv - uv * uv;
    let mut best = segment_distance_point(a, c, e)
        .min(segment_distance_point(b, c, e))
        .min(segment_distance_point(c, a, b))
        .min(segment_distance_point(e, a, b));
    if den > 1e-14 * uu * vv {
        let s = (uv * vw - vv * uw) / den;
        let t = (uu * vw - uv * uw) / den;
        if (0.0..=1.0).contains(&s) && (0.0..=1.0).contains(&t) {
            let p: Vec<f64> = a.iter().zip(&u).map(|(x, y)| x + s * y).collect();
            let q: Vec<f64> = c.iter().zip(&v).map(|(x, y)| x + t * y).collect();
            best = best.min(dist(&p, &q));
        }
    }
    best
}

fn angle(u: &[f64], v: &[f64]) -> f64 {
    (dot(u, v) / (norm(u) * norm(v))).clamp(-1.0, 1.0).acos()
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Checks the separation conditions for the partition of unity at λ₀.
pub fn audit_lambda0(points: &[Vec<f64>], lambda0: f64) -> Lambda0Audit {
    let n = points.len();
    let theta = (1.0 - lambda0).clamp(-1.0, 1.0).acos();
    let tan = theta.tan();
    let r = |i: usize, j: usize| dist(&points[i], &points[j]);
    let mut ball_margin = f64::INFINITY;
    let mut shared_vertex_margin = f64::INFINITY;
    let mut disjoint_edge_margin = f64::INFINITY;
    let mut ball_lens_margin = f64::INFINITY;
    let edges: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    for &(i, j) in &edges {
        ball_margin = ball_margin.min(r(i, j) - 2.0 * lambda0);
    }
    for (a, &(i, j)) in edges.iter().enumerate() {
        for &(k, l) in &edges[a + 1..] {
            let shared = [i, j].iter().find(|v| **v == k || **v == l).copied();
            match shared {
                Some(s) => {
                    let o1 = if s == i { j } else { i };
                    let o2 = if s == k { l } else { k };
                    let ang = angle(&diff(&points[o1], &points[s]), &diff(&points[o2], &points[s]));
                    shared_vertex_margin = shared_vertex_margin.min(ang - 2.0 * theta);
                }
                None => {
                    let dseg = segment_distance(&points[i], &points[j], &points[k], &points[l]);
                    let m = dseg - 0.5 * (r(i, j) + r(k, l)) * tan;
                    disjoint_edge_margin = disjoint_edge_margin.min(m);
                }
            }
        }
    }
    for v in 0..n {
        for &(k, l) in &edges {
            if v == k || v == l {
                continue;
            }
            let dv = segment_distance_point(&points[v], &points[k], &points[l]);
            ball_lens_margin = ball_lens_margin.min(dv - lambda0 - 0.5 * r(k, l) * tan);
        }
    }
    let passed = lambda0 > 0.0
        && lambda0 < 1.0
        && [ball_margin, shared_vertex_margin, disjoint_edge_margin, ball_lens_margin]
            .iter()
            .all(|m| *m > 0.0);
    Lambda0Audit {
        lambda0,
        theta,
        halvings: 0,
        ball_margin,
        shared_vertex_margin,
        disjoint_edge_margin,
        ball_lens_margin,
        passed,
    }
}

/// Starts at a quarter of the smallest pairwise distance and halves until the
/// separation audit passes.
pub fn choose_lambda0(points: &[Vec<f64>]) -> Result<Lambda0Audit> {
    let n = points.len();
    let mut dmin = f64::INFINITY;
    for i in 0..n {
        for j in i + 1..n {
            dmin = dmin.min(dist(&points[i], &points[j]));
        }
    }
    if !(dmin > 0.0 && dmin.is_finite()) {
        return Err(LabError::Calibration("points must be distinct".into()));
    }
    let mut lambda0 = 0.25 * dmin;
    for halvings in 0..=MAX_HALVINGS {
        let mut audit = audit_lambda0(points, lambda0);
        audit.halvings = halvings;
        if audit.passed {
            return Ok(audit);
        }
        lambda0 *= 0.5;
    }
    Err(LabError::Calibration(format!(
        "no admissible lambda0 after {MAX_HALVINGS} halvings"
    )))
}

/// Smooth compactly supported φ with φ = 0 on Y and φ = 1 on X∖Y whose
/// gradient along each segment [x, y] is zero or positively collinear with
/// y − x.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CalibrationFn {
    pub points: Vec<Vec<f64>>,
    /// Indices of Y in X.
    pub y: Vec<usize>,
    pub lambda0: f64,
    pub audit: Lambda0Audit,
}

/// Builds the calibration of the cut δ_Y. With `lambda0 = None` the scale is
/// chosen automatically; an explicit value must pass the separation audit.
pub fn calibration_phi(
    points: &[Vec<f64>],
    y: &[usize],
    lambda0: Option<f64>,
) -> Result<CalibrationFn> {
    let n = points.len();
    let d = points.first().map_or(0, Vec::len);
    let metric = super::FiniteMetric {
        points: points.to_vec(),
        delta: vec![vec![0.0; n]; n],
    };
    if !metric.is_affine_basis() {
        return Err(LabError::Calibration("X must be an affine basis".into()));
    }
    if d > MAX_DIM {
        return Err(LabError::Calibration(format!("dimension above {MAX_DIM}")));
    }
    let mut ys: Vec<usize> = y.to_vec();
    ys.sort_unstable();
    ys.dedup();
    if ys.is_empty() || ys.len() >= n || ys.iter().any(|&k| k >= n) {
        return Err(LabError::Calibration("Y must be a proper nonempty subset of X".into()));
    }
    let audit = match lambda0 {
        None => choose_lambda0(points)?,
        Some(l) => {
            let a = audit_lambda0(points, l);
            if !a.passed {
                return Err(LabError::Calibration(format!("lambda0 = {l} fails the separation audit")));
            }
            a
        }
    };
    Ok(CalibrationFn {
        points: points.to_vec(),
        y: ys,
        lambda0: audit.lambda0,
        audit,
    })
}

impl CalibrationFn {
    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    fn in_y(&self, k: usize) -> bool {
        self.y.contains(&k)
    }

    /// |z − x_i| as a jet.
    fn radius(&self, z: &[f64], i: usize) -> Jet {
        z.iter()
            .zip(&self.points[i])
            .enumerate()
            .fold(Jet::constant(0.0), |acc, (k, (a, b))| {
                let c = Jet::variable(a - b, k);
                acc + c * c
            })
            .sqrt()
    }

    /// g^λ_ij(z).
    fn transition(&self, z: &[f64], i: usize, j: usize, lambda: f64) -> Jet {
        let xi = &self.points[i];
        let xj = &self.points[j];
        let len = dist(xi, xj);
        let rz = dist(z, xi);
        if rz < 1e-14 {
            return Jet::constant(0.0);
        }
        let pz = z.iter().zip(xi).zip(xj).map(|((a, b), c)| (a - b) * (c - b)).sum::<f64>() / len;
        if pz <= 0.0 || 1.0 - (rz - pz) / (self.lambda0 * rz) <= 0.0 {
            return Jet::constant(0.0);
        }
        let r = self.radius(z, i);
        let mut p = Jet::constant(pz);
        for k in 0..z.len() {
            p.g[k] = (xj[k] - xi[k]) / len;
        }
        let along = p.scale(1.0 / lambda).smooth_g();
        let cone = (Jet::constant(1.0) - (r - p) * r.recip().scale(1.0 / self.lambda0)).smooth_g();
        along * cone
    }

    /// ξ_ij for i ≤ j.
    fn partition(&self, z: &[f64], i: usize, j: usize) -> Jet {
        if i == j {
            let rz = dist(z, &self.points[i]);
            if rz >= self.lambda0 {
                return Jet::constant(0.0);
            }
            if rz < 1e-14 {
                return Jet::constant(1.0);
            }
            (Jet::constant(1.0) - self.radius(z, i).scale(1.0 / self.lambda0)).smooth_g()
        } else {
            let a = self.transition(z, i, j, self.lambda0);
            if a.v == 0.0 {
                return Jet::constant(0.0);
            }
            a * self.transition(z, j, i, self.lambda0)
        }
    }

    fn jet(&self, z: &[f64]) -> Jet {
        let n = self.points.len();
        let mut balls = [Jet::constant(0.0); MAX_DIM + 1];
        for (i, b) in balls.iter_mut().enumerate().take(n) {
            *b = self.partition(z, i, i);
        }
        let mut phi = Jet::constant(0.0);
        for i in 0..n {
            if !self.in_y(i) {
                continue;
            }
            for j in 0..n {
                if self.in_y(j) {
                    continue;
                }
                let rij = dist(&self.points[i], &self.points[j]);
                let near_i = self.partition(z, i.min(j), i.max(j)) + balls[i];
                if near_i.v != 0.0 {
                    phi = phi + near_i * self.transition(z, i, j, rij);
                }
                if balls[j].v != 0.0 {
                    phi = phi - balls[j] * self.transition(z, j, i, rij);
                }
            }
        }
        for i in 0..n {
            if self.in_y(i) {
                continue;
            }
            phi = phi + balls[i];
            for j in i + 1..n {
                if !self.in_y(j) {
                    phi = phi + self.partition(z, i, j);
                }
            }
        }
        phi
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        self.jet(z).v
    }

    pub fn gradient(&self, z: &[f64]) -> Vec<f64> {
        self.jet(z).gradient(self.dim())
    }

    pub fn value_and_gradient(&self, z: &[f64]) -> (f64, Vec<f64>) {
        let j = self.jet(z);
        (j.v, j.gradient(self.dim()))
    }

    /// A radius R such that φ vanishes outside B(x̄, R) around the centroid.
    pub fn support_radius(&self) -> f64 {
        let c = centroid(&self.points);
        let tan = self.audit.theta.tan();
        let reach = self.points.iter().map(|p| dist(p, &c)).fold(0.0, f64::max);
        let mut width: f64 = self.lambda0;
        for i in 0..self.points.len() {
            for j in i + 1..self.points.len() {
                width = width.max(0.5 * dist(&self.points[i], &self.points[j]) * tan);
            }
        }
        reach + width
    }

    /// Largest |∇φ| over a deterministic sample of the support: the segments
    /// of X, their lens neighbourhoods and the balls around the points.
    pub fn lipschitz_estimate(&self, samples_per_edge: usize) -> f64 {
        let n = self.points.len();
        let d = self.dim();
        let mut best: f64 = 0.0;
        let tan = self.audit.theta.tan();
        for i in 0..n {
            for j in i + 1..n {
                let e = diff(&self.points[j], &self.points[i]);
                let r = norm(&e);
                let normal = orthonormal_to(&e);
                for s in 0..=samples_per_edge {
                    let t = s as f64 / samples_per_edge as f64;
                    for &frac in &[0.0, 0.25, 0.5, 0.75] {
                        let off = frac * r * tan * t.min(1.0 - t);
                        for sign in [-1.0, 1.0] {
                            let z: Vec<f64> = (0..d)
                                .map(|k| self.points[i][k] + t * e[k] + sign * off * normal[k])
                                .collect();
                            best = best.max(norm(&self.gradient(&z)));
                        }
                    }
                }
            }
        }
        best
    }
}

pub(crate) fn centroid(points: &[Vec<f64>]) -> Vec<f64> {
    let d = points[0].len();
    let n = points.len() as f64;
    (0..d).map(|k| points.iter().map(|p| p[k]).sum::<f64>() / n).collect()
}

/// A unit vector orthogonal to `e` (zero in dimension one).
fn orthonormal_to(e: &[f64]) -> Vec<f64> {
    let d = e.len();
    for k in 0..d {
        let mut v = vec![0.0; d];
        v[k] = 1.0;
        let c = dot(&v, e) / dot(e, e);
        v.iter_mut().zip(e).for_each(|(a, b)| *a -= c * b);
        let l = norm(&v);
        if l > 1e-8 {
            v.iter_mut().for_each(|a| *a /= l);
            return v;
        }
    }
    vec![0.0; d]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{fd_gradient, seeded_rng};
    use rand::Rng;

    fn triangle() -> Vec<Vec<f64>> {
        vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.3, 0.8]]
    }

    fn tetra() -> Vec<Vec<f64>> {
        vec![
            vec![0.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ]
    }

    #[test]
    fn values_on_the_points() {
        for (pts, y) in [(triangle(), vec![0]), (triangle(), vec![0, 2]), (tetra(), vec![1, 3])] {
            let c = calibration_phi(&pts, &y, None).unwrap();
            for (k, p) in pts.iter().enumerate() {
                let want = if y.contains(&k) { 0.0 } else { 1.0 };
                assert!((c.value(p) - want).abs() <= 1e-10, "{k}: {}", c.value(p));
            }
        }
    }

    #[test]
    fn gradient_on_segments() {
        let pts = tetra();
        let y = vec![0, 2];
        let c = calibration_phi(&pts, &y, None).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if i == j {
                    continue;
                }
                let e = diff(&pts[j], &pts[i]);
                for s in 1..20 {
                    let t = s as f64 / 20.0;
                    let z: Vec<f64> = (0..3).map(|k| pts[i][k] + t * e[k]).collect();
                    let g = c.gradient(&z);
                    let crossing = y.contains(&i) != y.contains(&j);
                    if crossing {
                        let sgn = if y.contains(&i) { 1.0 } else { -1.0 };
                        let along = sgn * dot(&g, &e) / norm(&e);
                        assert!(along > 0.0);
                        let perp = (dot(&g, &g) - along * along).max(0.0).sqrt();
                        assert!(perp <= 1e-8 * (1.0 + along), "{perp}");
                        let expect = if y.contains(&i) { t } else { 1.0 - t };
                        assert!((c.value(&z) - crate::metric::smooth_g(expect).0).abs() <= 1e-10);
                    } else {
                        assert!(norm(&g) <= 1e-10, "{i}{j} t={t}: {g:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn closed_form_gradient_matches_differences() {
        let c = calibration_phi(&triangle(), &[1], None).unwrap();
        let mut rng = seeded_rng(3, 0);
        let mut checked = 0;
        for _ in 0..400 {
            let z = vec![rng.gen_range(-0.3..1.3), rng.gen_range(-0.3..1.1)];
            let g = c.gradient(&z);
            let mut fd = vec![0.0; 2];
            fd_gradient(|x| c.value(x), &z, &mut fd);
            let scale = norm(&g).max(1e-3);
            if norm(&g) > 1e-6 {
                checked += 1;
            }
            assert!(norm(&diff(&g, &fd)) <= 1e-5 * scale.max(1.0), "{z:?}: {g:?} vs {fd:?}");
        }
        assert!(checked > 10);
    }

    #[test]
    fn compact_support() {
        let c = calibration_phi(&triangle(), &[0], None).unwrap();
        let r = c.support_radius();
        let ctr = centroid(&c.points);
        for k in 0..64 {
            let a = k as f64 * std::f64::consts::TAU / 64.0;
            let z = vec![ctr[0] + 1.01 * r * a.cos(), ctr[1] + 1.01 * r * a.sin()];
            assert_eq!(c.value(&z), 0.0);
        }
        assert!(c.lipschitz_estimate(50) > 0.0);
    }

    #[test]
    fn lambda0_search_and_rejections() {
        let a = choose_lambda0(&triangle()).unwrap();
        assert!(a.passed && a.lambda0 < 0.25);
        assert!(!audit_lambda0(&triangle(), 0.9).passed);
        let flat = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![2.0, 0.0]];
        assert!(calibration_phi(&flat, &[0], None).is_err());
        assert!(calibration_phi(&triangle(), &[], None).is_err());
        assert!(calibration_phi(&triangle(), &[0, 1, 2], None).is_err());
        assert!(calibration_phi(&triangle(), &[0], Some(0.9)).is_err());
    }

    #[test]
    fn segment_distances() {
        let d = segment_distance(&[0.0, 0.0], &[1.0, 0.0], &[0.5, 1.0], &[0.5, 2.0]);
        assert!((d - 1.0).abs() < 1e-14);
        let d = segment_distance(&[0.0, 0.0, 0.0], &[1.0, 0.0, 0.0], &[0.5, -1.0, 1.0], &[0.5, 1.0, 1.0]);
        assert!((d - 1.0).abs() < 1e-14);
    }
}
