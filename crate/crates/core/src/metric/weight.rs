use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::calibration::{calibration_phi, centroid, choose_lambda0, segment_distance_point, CalibrationFn};
use super::smooth::smooth_g;
use super::{decompose_cuts, CutDecomposition, FiniteMetric};
use crate::error::{LabError, Result};
use crate::numeric::{adaptive_simpson, dist, fd_gradient, lerp, norm, seeded_rng};
use crate::potential::Potential;
use crate::profile::{geodesic_cost, GeodesicOptions, Path, PathSpace};

/// w = Σ λ_Y |∇φ_Y| + √2·g(dist(z, G)/ρ), where G is the union of the
/// segments between points of X. The potential is W = ½w².
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricWeight {
    pub metric: FiniteMetric,
    pub decomposition: CutDecomposition,
    /// (λ_Y, φ_Y) for every cut with positive weight.
    pub calibrations: Vec<(f64, CalibrationFn)>,
    pub lambda0: f64,
    pub rho: f64,
    /// Sum of λ_Y times the sampled Lipschitz estimates of φ_Y.
    pub lipschitz_estimate: f64,
    /// Sampled verdict on w > 0 away from X; `None` when δ vanishes somewhere
    /// off the diagonal.
    pub positive_off_x: Option<bool>,
}

impl MetricWeight {
    pub fn n(&self) -> usize {
        self.metric.n()
    }

    pub fn w0(&self, z: &[f64]) -> f64 {
        self.calibrations
            .iter()
            .map(|(l, c)| l * norm(&c.gradient(z)))
            .sum()
    }

    pub fn distance_to_graph(&self, z: &[f64]) -> f64 {
        let pts = &self.metric.points;
        let mut best = f64::INFINITY;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                best = best.min(segment_distance_point(z, &pts[i], &pts[j]));
            }
        }
        best
    }

    pub fn w1(&self, z: &[f64]) -> f64 {
        std::f64::consts::SQRT_2 * smooth_g(self.distance_to_graph(z) / self.rho).0
    }

    pub fn w(&self, z: &[f64]) -> f64 {
        self.w0(z) + self.w1(z)
    }

    /// Beyond this distance from the centroid of X the weight equals √2.
    pub fn far_radius(&self) -> f64 {
        let c = centroid(&self.metric.points);
        let reach = self.metric.points.iter().map(|p| dist(p, &c)).fold(0.0, f64::max);
        let support = self
            .calibrations
            .iter()
            .map(|(_, c)| c.support_radius())
            .fold(0.0, f64::max);
        support.max(reach + self.rho) * 1.0001
    }

    /// ∫ w along the straight segment from x_i to x_j.
    pub fn segment_length(&self, i: usize, j: usize) -> f64 {
        let a = &self.metric.points[i];
        let b = &self.metric.points[j];
        let len = dist(a, b);
        if len == 0.0 {
            return 0.0;
        }
        let f = |t: f64| self.w(&lerp(a, b, t));
        len * adaptive_simpson(&f, 0.0, 1.0, 1e-11 / len)
    }
}

impl Potential for MetricWeight {
    fn dim(&self) -> usize {
        self.metric.dim()
    }

    fn eval(&self, z: &[f64]) -> f64 {
        let w = self.w(z);
        0.5 * w * w
    }

    fn grad(&self, z: &[f64], out: &mut [f64]) {
        let w = self.w(z);
        fd_gradient(|x| self.w(x), z, out);
        out.iter_mut().for_each(|v| *v *= w);
    }

    fn speed(&self, z: &[f64]) -> f64 {
        self.w(z)
    }

    fn speed_grad(&self, z: &[f64], out: &mut [f64]) {
        fd_gradient(|x| self.w(x), z, out);
    }

    fn known_wells(&self) -> Vec<Vec<f64>> {
        self.metric.points.clone()
    }

    fn tag(&self) -> String {
        format!("metric-weight-n{}", self.n())
    }
}

/// Assembles the weight for a pseudo-metric on an affine basis.
pub fn build_weight_w(metric: &FiniteMetric) -> Result<MetricWeight> {
    let report = super::validate_pseudo_metric(&metric.delta);
    if !report.valid || metric.delta.len() != metric.n() {
        return Err(LabError::InvalidArgument("delta is not a pseudo-metric on X".into()));
    }
    if !metric.is_affine_basis() {
        return Err(LabError::Calibration("X must be an affine basis".into()));
    }
    let decomposition = decompose_cuts(&metric.delta)?;
    if !decomposition.feasible {
        return Err(LabError::Infeasible {
            residual: decomposition.residual,
        });
    }
    let audit = choose_lambda0(&metric.points)?;
    let lambda0 = audit.lambda0;
    let calibrations: Vec<(f64, CalibrationFn)> = decomposition
        .cuts
        .iter()
        .map(|c| Ok((c.weight, calibration_phi(&metric.points, &c.subset, Some(lambda0))?)))
        .collect::<Result<_>>()?;
    let lipschitz_estimate = calibrations
        .iter()
        .map(|(l, c)| l * c.lipschitz_estimate(100))
        .sum::<f64>()
        + std::f64::consts::SQRT_2 * super::smooth::max_slope() / (0.5 * lambda0);
    let mut w = MetricWeight {
        metric: metric.clone(),
        decomposition,
        calibrations,
        lambda0,
        rho: 0.5 * lambda0,
        lipschitz_estimate,
        positive_off_x: None,
    };
    let n = metric.n();
    let is_metric = (0..n).all(|i| (0..n).all(|j| i == j || metric.delta[i][j] > 0.0));
    if is_metric {
        w.positive_off_x = Some(sample_positive(&w));
    }
    Ok(w)
}

/// Samples w on the segments of X and at random points of a bounding box.
///
/// g is flat to all orders at 0 and 1, so near X the true value of w drops
/// below the rounding error of the cancelling partition terms, and near G the
/// term w₁ underflows. Samples are therefore taken at relative position
/// t ∈ [0.05, 0.95] on the segments and at distance at least ρ/50 from G
/// elsewhere.
fn sample_positive(w: &MetricWeight) -> bool {
    let pts = &w.metric.points;
    let d = w.metric.dim();
    let c = centroid(pts);
    let r = w.far_radius();
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            for s in 0..=192 {
                let z = lerp(&pts[i], &pts[j], 0.05 + 0.9 * s as f64 / 192.0);
                if w.w(&z) <= 0.0 {
                    return false;
                }
            }
        }
    }
    let mut rng = seeded_rng(0x77, 0);
    for _ in 0..2000 {
        let z: Vec<f64> = (0..d).map(|k| c[k] + rng.gen_range(-r..r)).collect();
        if w.distance_to_graph(&z) > w.rho / 50.0 && w.w(&z) <= 0.0 {
            return false;
        }
    }
    true
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SegmentAuditOptions {
    /// Perturbed competitor paths per pair.
    pub trials: usize,
    pub seed: u64,
    /// Slack for the perturbed-path comparison.
    pub perturbed_tol: f64,
    /// Slack for the geodesic-search comparison.
    pub geodesic_tol: f64,
    /// Skip the multi-start geodesic search and audit with perturbed paths only.
    pub run_geodesic: bool,
    pub geodesic: GeodesicOptions,
}

impl Default for SegmentAuditOptions {
    fn default() -> Self {
        Self {
            trials: 200,
            seed: 0,
            perturbed_tol: 1e-6,
            geodesic_tol: 1e-5,
            run_geodesic: true,
            geodesic: GeodesicOptions {
                n_nodes: 100,
                n_restarts: 3,
                max_iter: 400,
                seed: 0,
                initial_paths: Vec::new(),
            },
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PairAudit {
    pub i: usize,
    pub j: usize,
    pub delta: f64,
    pub segment_length: f64,
    pub segment_error: f64,
    pub min_perturbed_length: f64,
    pub perturbed_defeats: usize,
    pub geodesic_cost: Option<f64>,
    pub geodesic_defeat: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SegmentAudit {
    pub pairs: Vec<PairAudit>,
    pub max_segment_error: f64,
    pub total_defeats: usize,
    pub pass: bool,
}

/// Compares the weighted length of every segment [x_i, x_j] with δ(x_i, x_j)
/// and with competitor curves: random smooth perturbations of the segment and
/// the result of a multi-start geodesic search seeded with the segment.
pub fn verify_segment_optimality(w: &MetricWeight, opts: &SegmentAuditOptions) -> Result<SegmentAudit> {
    if !w.metric.is_affine_basis() {
        return Err(LabError::Calibration("X must be an affine basis".into()));
    }
    let n = w.n();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let audits: Vec<PairAudit> = pairs
        .par_iter()
        .map(|&(i, j)| audit_pair(w, i, j, opts))
        .collect::<Result<_>>()?;
    let max_segment_error = audits.iter().map(|a| a.segment_error).fold(0.0, f64::max);
    let total_defeats = audits
        .iter()
        .map(|a| a.perturbed_defeats + usize::from(a.geodesic_defeat))
        .sum();
    Ok(SegmentAudit {
        pass: total_defeats == 0 && max_segment_error <= opts.perturbed_tol,
        pairs: audits,
        max_segment_error,
        total_defeats,
    })
}

fn audit_pair(w: &MetricWeight, i: usize, j: usize, opts: &SegmentAuditOptions) -> Result<PairAudit> {
    let a = &w.metric.points[i];
    let b = &w.metric.points[j];
    let delta = w.metric.delta[i][j];
    let seg = w.segment_length(i, j);
    let mut rng = seeded_rng(opts.seed, (i * w.n() + j) as u64);
    let mut min_len = f64::INFINITY;
    let mut defeats = 0;
    for _ in 0..opts.trials {
        let path = perturbed_path(a, b, &mut rng, 160);
        let len = weighted_length(w, &path);
        min_len = min_len.min(len);
        if len < delta - opts.perturbed_tol {
            defeats += 1;
        }
    }
    let (geodesic, geodesic_defeat) = if opts.run_geodesic {
        let mut g = opts.geodesic.clone();
        g.seed = opts.seed ^ ((i * w.n() + j) as u64);
        g.initial_paths = vec![Path::segment(a, b, g.n_nodes.max(2), None)];
        let res = geodesic_cost(w, PathSpace::Ambient, a, b, &g)?;
        (Some(res.cost), res.cost < seg - opts.geodesic_tol)
    } else {
        (None, false)
    };
    Ok(PairAudit {
        i,
        j,
        delta,
        segment_length: seg,
        segment_error: (seg - delta).abs(),
        min_perturbed_length: min_len,
        perturbed_defeats: defeats,
        geodesic_cost: geodesic,
        geodesic_defeat,
    })
}

/// γ(t) = a + t(b − a) + Σ_k c_k sin(kπt) v_k with random directions v_k and
/// amplitudes log-uniform between 10⁻⁴ and ½ of |b − a|.
fn perturbed_path<R: Rng>(a: &[f64], b: &[f64], rng: &mut R, n: usize) -> Path {
    let d = a.len();
    let len = dist(a, b);
    let modes: Vec<(f64, Vec<f64>)> = (1..=3)
        .map(|_| {
            let amp = len * 10f64.powf(rng.gen_range(-4.0..-0.3));
            let mut v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let l = norm(&v).max(1e-12);
            v.iter_mut().for_each(|x| *x /= l);
            (amp, v)
        })
        .collect();
    let pts = (0..=n)
        .map(|s| {
            let t = s as f64 / n as f64;
            let mut z = lerp(a, b, t);
            for (k, (amp, v)) in modes.iter().enumerate() {
                let c = amp * ((k + 1) as f64 * std::f64::consts::PI * t).sin();
                z.iter_mut().zip(v).for_each(|(x, y)| *x += c * y);
            }
            z
        })
        .collect();
    Path::new(pts, None)
}

/// CSV `x1,x2,w` on an n×n grid over the box spanned by the first two
/// coordinates (margin λ₀·4 around X); further coordinates sit at the centroid.
pub fn weight_grid_csv(w: &MetricWeight, n: usize) -> String {
    let pts = &w.metric.points;
    let c = centroid(pts);
    let margin = 4.0 * w.lambda0 + w.rho;
    let lo: Vec<f64> = (0..2).map(|k| pts.iter().map(|p| p[k]).fold(f64::INFINITY, f64::min) - margin).collect();
    let hi: Vec<f64> = (0..2).map(|k| pts.iter().map(|p| p[k]).fold(f64::NEG_INFINITY, f64::max) + margin).collect();
    let mut out = String::from("x1,x2,w\n");
    let n = n.max(2);
    for a in 0..n {
        for b in 0..n {
            let mut z = c.clone();
            z[0] = lo[0] + (hi[0] - lo[0]) * a as f64 / (n - 1) as f64;
            z[1] = lo[1] + (hi[1] - lo[1]) * b as f64 / (n - 1) as f64;
            out.push_str(&format!("{:.8e},{:.8e},{:.10e}\n", z[0], z[1], w.w(&z)));
        }
    }
    out
}

/// ∫ w |dγ| along a polyline, adaptive Simpson per edge with a total
/// absolute tolerance of 10⁻⁹.
pub fn weighted_length(w: &MetricWeight, path: &Path) -> f64 {
    let nseg = path.points.len().saturating_sub(1).max(1) as f64;
    path.points
        .windows(2)
        .map(|s| {
            let len = dist(&s[0], &s[1]);
            if len == 0.0 {
                return 0.0;
            }
            let f = |t: f64| w.w(&lerp(&s[0], &s[1], t));
            len * adaptive_simpson(&f, 0.0, 1.0, 1e-9 / (nseg * len))
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> Vec<Vec<f64>> {
        vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.3, 0.8]]
    }

    fn quick() -> SegmentAuditOptions {
        SegmentAuditOptions {
            trials: 40,
            run_geodesic: false,
            ..Default::default()
        }
    }

    #[test]
    fn equilateral_weight() {
        let m = FiniteMetric {
            points: triangle(),
            delta: vec![vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]],
        };
        let w = build_weight_w(&m).unwrap();
        for p in &m.points {
            assert_eq!(w.w(p), 0.0);
        }
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            assert!((w.segment_length(i, j) - 1.0).abs() <= 1e-6);
        }
        assert_eq!(w.positive_off_x, Some(true));
        let far = vec![w.far_radius() + 1.0 + 0.3, 0.4];
        assert!((w.w(&far) - std::f64::consts::SQRT_2).abs() < 1e-15);
        let audit = verify_segment_optimality(&w, &quick()).unwrap();
        assert!(audit.pass, "{audit:?}");
    }

    #[test]
    fn single_cut_weight() {
        let m = FiniteMetric {
            points: triangle(),
            delta: super::super::cut_metric(&[1], 3).unwrap(),
        };
        let w = build_weight_w(&m).unwrap();
        assert_eq!(w.positive_off_x, None);
        let audit = verify_segment_optimality(&w, &quick()).unwrap();
        assert!(audit.pass, "{audit:?}");
        assert!(w.segment_length(0, 2) <= 1e-12);
    }

    #[test]
    fn square_is_rejected() {
        let d = vec![
            vec![0.0, 2.0, 1.0, 2.0],
            vec![2.0, 0.0, 2.0, 1.0],
            vec![1.0, 2.0, 0.0, 2.0],
            vec![2.0, 1.0, 2.0, 0.0],
        ];
        let m = FiniteMetric {
            points: vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0]],
            delta: d,
        };
        assert!(matches!(build_weight_w(&m), Err(LabError::Calibration(_))));
    }

    #[test]
    fn potential_interface() {
        let m = FiniteMetric {
            points: triangle(),
            delta: vec![vec![0.0, 2.0, 1.5], vec![2.0, 0.0, 1.0], vec![1.5, 1.0, 0.0]],
        };
        let w = build_weight_w(&m).unwrap();
        let z = [0.5, 0.3];
        assert!((w.eval(&z) - 0.5 * w.w(&z).powi(2)).abs() < 1e-15);
        assert_eq!(w.known_wells().len(), 3);
        assert!(weight_grid_csv(&w, 5).lines().count() == 26);
    }
}
