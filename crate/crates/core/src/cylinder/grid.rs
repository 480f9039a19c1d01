use std::fs;
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Nodes of the truncated cylinder [−L, L] × 𝕋^{d−1}.
///
/// Axial nodes sit at x₁ = −L + i·h₁ (i = 0..n1), torus nodes at
/// x′ = j·h′ with h′ = 1/np in each periodic direction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderGrid {
    pub d: usize,
    #[serde(rename = "L")]
    pub l: f64,
    pub n1: usize,
    pub np: usize,
}

impl CylinderGrid {
    pub fn new(d: usize, l: f64, n1: usize, np: usize) -> Result<Self> {
        if !(2..=3).contains(&d) {
            return Err(LabError::InvalidArgument(format!(
                "cylinder fields support d = 2 or 3, got {d}"
            )));
        }
        if n1 < 8 || np < 8 {
            return Err(LabError::InvalidArgument("grid needs n1 >= 8 and np >= 8".into()));
        }
        if n1 % 2 != 0 {
            return Err(LabError::InvalidArgument(
                "n1 must be even so the discrete Poisson operator is invertible".into(),
            ));
        }
        if d == 3 && np > 32 {
            return Err(LabError::InvalidArgument("d = 3 grids are limited to np <= 32".into()));
        }
        if !(l > 0.0) {
            return Err(LabError::InvalidArgument("L must be positive".into()));
        }
        Ok(Self { d, l, n1, np })
    }

    pub fn h1(&self) -> f64 {
        2.0 * self.l / (self.n1 - 1) as f64
    }

    pub fn hp(&self) -> f64 {
        1.0 / self.np as f64
    }

    /// Larger of the two spacings.
    pub fn h(&self) -> f64 {
        self.h1().max(self.hp())
    }

    /// Nodes per torus slice, np^{d−1}.
    pub fn n_slice(&self) -> usize {
        self.np.pow((self.d - 1) as u32)
    }

    pub fn n_nodes(&self) -> usize {
        self.n1 * self.n_slice()
    }

    /// Volume of a torus cell, h′^{d−1}.
    pub fn slice_cell(&self) -> f64 {
        self.hp().powi((self.d - 1) as i32)
    }

    pub fn x1(&self, i: usize) -> f64 {
        -self.l + self.h1() * i as f64
    }

    /// Torus coordinates of slice index `j`.
    pub fn xp(&self, j: usize) -> Vec<f64> {
        let mut r = j;
        (0..self.d - 1)
            .map(|_| {
                let c = r % self.np;
                r /= self.np;
                c as f64 * self.hp()
            })
            .collect()
    }

    pub fn node(&self, i: usize, j: usize) -> usize {
        i * self.n_slice() + j
    }

    /// Slice index shifted by ±1 in torus direction `k`, with wraparound.
    pub fn shift(&self, j: usize, k: usize, forward: bool) -> usize {
        let stride = self.np.pow(k as u32);
        let c = (j / stride) % self.np;
        let nc = if forward {
            (c + 1) % self.np
        } else {
            (c + self.np - 1) % self.np
        };
        j - c * stride + nc * stride
    }

    /// Trapezoid weight in x₁.
    pub fn axial_weight(&self, i: usize) -> f64 {
        if i == 0 || i == self.n1 - 1 {
            0.5
        } else {
            1.0
        }
    }
}

/// Discrete vector field u on the cylinder with Dirichlet data at x₁ = ∓L.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub grid: CylinderGrid,
    /// Node-major values: `values[node * d + component]`.
    pub values: Vec<f64>,
    pub bc: (Vec<f64>, Vec<f64>),
}

impl Field {
    /// Builds a field from a closure of (x₁, x′), then pins the boundary slices.
    pub fn from_fn<F: Fn(f64, &[f64]) -> Vec<f64>>(
        grid: CylinderGrid,
        bc: (Vec<f64>, Vec<f64>),
        f: F,
    ) -> Self {
        let d = grid.d;
        let mut values = vec![0.0; grid.n_nodes() * d];
        for i in 0..grid.n1 {
            let x1 = grid.x1(i);
            for j in 0..grid.n_slice() {
                let u = f(x1, &grid.xp(j));
                let n = grid.node(i, j);
                values[n * d..(n + 1) * d].copy_from_slice(&u[..d]);
            }
        }
        let mut fld = Self { grid, values, bc };
        fld.pin_boundary();
        fld
    }

    pub fn constant(grid: CylinderGrid, z: &[f64]) -> Self {
        Self::from_fn(grid, (z.to_vec(), z.to_vec()), |_, _| z.to_vec())
    }

    /// Field depending on x₁ only.
    pub fn from_profile<F: Fn(f64) -> Vec<f64>>(
        grid: CylinderGrid,
        bc: (Vec<f64>, Vec<f64>),
        f: F,
    ) -> Self {
        Self::from_fn(grid, bc, |x1, _| f(x1))
    }

    pub fn d(&self) -> usize {
        self.grid.d
    }

    pub fn at(&self, i: usize, j: usize) -> &[f64] {
        let d = self.grid.d;
        let n = self.grid.node(i, j);
        &self.values[n * d..(n + 1) * d]
    }

    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let d = self.grid.d;
        let n = self.grid.node(i, j);
        &mut self.values[n * d..(n + 1) * d]
    }

    pub fn pin_boundary(&mut self) {
        let last = self.grid.n1 - 1;
        for j in 0..self.grid.n_slice() {
            let lo = self.bc.0.clone();
            let hi = self.bc.1.clone();
            self.at_mut(0, j).copy_from_slice(&lo);
            self.at_mut(last, j).copy_from_slice(&hi);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// CSV with columns `x1, x2[, x3], u1, …, ud`.
    pub fn to_csv(&self) -> String {
        let g = &self.grid;
        let mut out = String::from("x1");
        for k in 2..=g.d {
            out.push_str(&format!(",x{k}"));
        }
        for k in 1..=g.d {
            out.push_str(&format!(",u{k}"));
        }
        out.push('\n');
        for i in 0..g.n1 {
            for j in 0..g.n_slice() {
                out.push_str(&format!("{:.10e}", g.x1(i)));
                for x in g.xp(j) {
                    out.push_str(&format!(",{x:.10e}"));
                }
                for v in self.at(i, j) {
                    out.push_str(&format!(",{v:.15e}"));
                }
                out.push('\n');
            }
        }
        out
    }

    /// Writes little-endian f64 values to `path` and a JSON header next to it
    /// (same name with `.json` appended).
    pub fn write_snapshot(&self, path: &FsPath) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(path, bytes)?;
        let header = SnapshotHeader {
            grid: self.grid,
            bc: self.bc.clone(),
            n_values: self.values.len(),
            layout: "f64 little-endian; value index = (i * np^(d-1) + j) * d + component; \
                     i axial from x1=-L, j torus index with direction 2 fastest"
                .into(),
        };
        let mut side = path.as_os_str().to_owned();
        side.push(".json");
        fs::write(side, serde_json::to_string_pretty(&header)?)?;
        Ok(())
    }

    pub fn read_snapshot(path: &FsPath) -> Result<Self> {
        let mut side = path.as_os_str().to_owned();
        side.push(".json");
        let header: SnapshotHeader = serde_json::from_str(&fs::read_to_string(side)?)?;
        let bytes = fs::read(path)?;
        if bytes.len() != header.n_values * 8 {
            return Err(LabError::Io("snapshot size does not match header".into()));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            grid: header.grid,
            values,
            bc: header.bc,
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub grid: CylinderGrid,
    pub bc: (Vec<f64>, Vec<f64>),
    pub n_values: usize,
    pub layout: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_geometry() {
        let g = CylinderGrid::new(3, 2.0, 10, 8).unwrap();
        assert_eq!(g.n_slice(), 64);
        assert!((g.x1(9) - 2.0).abs() < 1e-15);
        let j = 7 + 8 * 3;
        assert_eq!(g.shift(j, 0, true), 8 * 3);
        assert_eq!(g.shift(j, 1, false), 7 + 8 * 2);
        assert_eq!(g.xp(j), vec![7.0 / 8.0, 3.0 / 8.0]);
        assert!(CylinderGrid::new(2, 1.0, 9, 8).is_err());
        assert!(CylinderGrid::new(2, 1.0, 8, 4).is_err());
        assert!(CylinderGrid::new(4, 1.0, 8, 8).is_err());
    }

    #[test]
    fn snapshot_round_trip() {
        let g = CylinderGrid::new(2, 1.0, 8, 8).unwrap();
        let f = Field::from_fn(g, (vec![0.0, -1.0], vec![0.0, 1.0]), |x1, xp| {
            vec![xp[0].sin(), x1.tanh()]
        });
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("u.bin");
        f.write_snapshot(&p).unwrap();
        assert_eq!(Field::read_snapshot(&p).unwrap(), f);
        assert!(f.to_csv().lines().count() == 1 + 64);
    }
}
