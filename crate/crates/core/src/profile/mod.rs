//! One-dimensional transition profiles and degenerate geodesic costs in the
//! metric 2W·g₀.

mod geodesic;
mod ode;
mod triangle;

use serde::{Deserialize, Serialize};

use crate::potential::Potential;

pub use geodesic::{
    discrete_length, geodesic_cost, geodesic_cost_2d, path_length, GeodesicOptions,
    GeodesicResult, PathSpace,
};
pub use ode::{
    energy_1d, reparametrize_equipartition, sample_profile, solve_profile_ode, OdeOptions,
};
pub use triangle::{check_triangle_strict, MarginRow, TriangleReport};

/// Discrete curve γ₀, …, γ_N.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub points: Vec<Vec<f64>>,
    pub constrained_slice: Option<f64>,
}

impl Path {
    pub fn new(points: Vec<Vec<f64>>, constrained_slice: Option<f64>) -> Self {
        let mut p = Self {
            points,
            constrained_slice,
        };
        if let Some(a) = constrained_slice {
            for z in &mut p.points {
                z[0] = a;
            }
        }
        p
    }

    /// Straight segment with `n` intervals.
    pub fn segment(a: &[f64], b: &[f64], n: usize, constrained_slice: Option<f64>) -> Self {
        let n = n.max(1);
        let pts = (0..=n)
            .map(|k| crate::numeric::lerp(a, b, k as f64 / n as f64))
            .collect();
        Self::new(pts, constrained_slice)
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    /// Cumulative Euclidean arc length at each node.
    pub fn arc_lengths(&self) -> Vec<f64> {
        let mut s = Vec::with_capacity(self.points.len());
        let mut acc = 0.0;
        s.push(0.0);
        for w in self.points.windows(2) {
            acc += crate::numeric::dist(&w[0], &w[1]);
            s.push(acc);
        }
        s
    }

    /// Removes consecutive duplicate nodes.
    pub fn cleaned(&self) -> Self {
        let mut pts: Vec<Vec<f64>> = Vec::with_capacity(self.points.len());
        for z in &self.points {
            if pts.last().is_none_or(|q| crate::numeric::dist(q, z) > 0.0) {
                pts.push(z.clone());
            }
        }
        if pts.len() == 1 && self.points.len() > 1 {
            pts.push(pts[0].clone());
        }
        Self {
            points: pts,
            constrained_slice: self.constrained_slice,
        }
    }

    /// Point at arc length `s` along the polyline.
    pub fn at_arc_length(&self, s_nodes: &[f64], s: f64) -> Vec<f64> {
        let n = self.points.len();
        if s <= 0.0 {
            return self.points[0].clone();
        }
        if s >= s_nodes[n - 1] {
            return self.points[n - 1].clone();
        }
        let k = match s_nodes.binary_search_by(|v| v.partial_cmp(&s).unwrap()) {
            Ok(k) => return self.points[k].clone(),
            Err(k) => k - 1,
        };
        let len = s_nodes[k + 1] - s_nodes[k];
        let t = if len > 0.0 { (s - s_nodes[k]) / len } else { 0.0 };
        crate::numeric::lerp(&self.points[k], &self.points[k + 1], t)
    }

    /// CSV with columns `s, z1, …, zd` where `s` is arc length.
    pub fn to_csv(&self) -> String {
        let d = self.dim();
        let mut out = String::from("s");
        for i in 1..=d {
            out.push_str(&format!(",z{i}"));
        }
        out.push('\n');
        for (s, z) in self.arc_lengths().iter().zip(&self.points) {
            out.push_str(&format!("{s:.12e}"));
            for v in z {
                out.push_str(&format!(",{v:.12e}"));
            }
            out.push('\n');
        }
        out
    }
}

/// A profile t ↦ γ(t) sampled on an increasing grid, normalized so that the
/// arc-length midpoint sits at t = 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Profile1D {
    pub t_samples: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub a: f64,
    pub wells: (Vec<f64>, Vec<f64>),
    /// Both ends reached the wells within the attachment tolerance.
    pub attached: bool,
    /// max |½|γ̇|² − W(γ)| measured by finite differences of the samples.
    pub equipartition_residual: f64,
}

impl Profile1D {
    pub fn constant(z: Vec<f64>) -> Self {
        Self {
            t_samples: vec![0.0],
            a: z[0],
            wells: (z.clone(), z.clone()),
            values: vec![z],
            attached: true,
            equipartition_residual: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    /// Linear interpolation with constant extension beyond the sampled range.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let n = self.t_samples.len();
        if t <= self.t_samples[0] {
            return self.values[0].clone();
        }
        if t >= self.t_samples[n - 1] {
            return self.values[n - 1].clone();
        }
        let k = self
            .t_samples
            .partition_point(|&x| x <= t)
            .saturating_sub(1)
            .min(n - 2);
        let (t0, t1) = (self.t_samples[k], self.t_samples[k + 1]);
        crate::numeric::lerp(&self.values[k], &self.values[k + 1], (t - t0) / (t1 - t0))
    }

    pub fn as_path(&self) -> Path {
        Path::new(self.values.clone(), Some(self.a))
    }

    /// True when an end sample is not a well, so the energy misses a tail.
    pub fn truncated(&self, p: &dyn Potential) -> bool {
        let tol = p.well_tolerance().max(1e-12);
        let first = &self.values[0];
        let last = &self.values[self.values.len() - 1];
        p.eval(first) > tol || p.eval(last) > tol
    }

    /// CSV with columns `t, z1, …, zd`.
    pub fn to_csv(&self) -> String {
        let d = self.dim();
        let mut out = String::from("t");
        for i in 1..=d {
            out.push_str(&format!(",z{i}"));
        }
        out.push('\n');
        for (t, z) in self.t_samples.iter().zip(&self.values) {
            out.push_str(&format!("{t:.12e}"));
            for v in z {
                out.push_str(&format!(",{v:.12e}"));
            }
            out.push('\n');
        }
        out
    }
}
