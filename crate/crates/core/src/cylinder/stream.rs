use serde::{Deserialize, Serialize};

use super::grid::{CylinderGrid, Field};
use crate::error::{LabError, Result};

/// Rows at each end of the cylinder on which ψ is held at zero.
pub const COLLAR: usize = 3;

/// Two-dimensional field u = (a − D₂ψ, b(x₁) + D₁ψ) with centered
/// differences D₁, D₂; its centered divergence vanishes identically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamFunction {
    pub grid: CylinderGrid,
    pub psi: Vec<f64>,
    /// Axial background for u₂, one value per row.
    pub background: Vec<f64>,
    pub a: f64,
}

impl StreamFunction {
    /// ψ = 0 with a background interpolating `u2_minus` and `u2_plus`
    /// through a smooth switch.
    pub fn new(grid: CylinderGrid, a: f64, u2_minus: f64, u2_plus: f64) -> Result<Self> {
        if grid.d != 2 {
            return Err(LabError::Dimension {
                expected: 2,
                got: grid.d,
            });
        }
        let background = (0..grid.n1)
            .map(|i| {
                let s = (grid.x1(i) + grid.l) / (2.0 * grid.l);
                u2_minus + (u2_plus - u2_minus) * smooth_switch(s)
            })
            .collect();
        Ok(Self {
            grid,
            psi: vec![0.0; grid.n_nodes()],
            background,
            a,
        })
    }

    /// Rows carrying free values of ψ.
    pub fn free_rows(&self) -> std::ops::Range<usize> {
        free_rows(&self.grid)
    }

    /// Zeroes ψ on the collar rows.
    pub fn enforce_collar(&mut self) {
        let g = self.grid;
        for i in (0..g.n1).filter(|i| !free_rows(&g).contains(i)) {
            for j in 0..g.n_slice() {
                self.psi[g.node(i, j)] = 0.0;
            }
        }
    }
}

pub(crate) fn free_rows(g: &CylinderGrid) -> std::ops::Range<usize> {
    COLLAR..g.n1 - COLLAR
}

/// C^∞ step from 0 at s ≤ 0 to 1 at s ≥ 1.
pub fn smooth_switch(s: f64) -> f64 {
    let bump = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
    let (l, r) = (bump(s), bump(1.0 - s));
    l / (l + r)
}

/// Builds the field induced by a stream function.
pub fn from_stream(s: &StreamFunction) -> Field {
    let g = s.grid;
    let (h1, hp) = (g.h1(), g.hp());
    let psi = |i: isize, j: usize| -> f64 {
        if i < 0 || i >= g.n1 as isize {
            0.0
        } else {
            s.psi[g.node(i as usize, j)]
        }
    };
    let mut values = vec![0.0; 2 * g.n_nodes()];
    for i in 0..g.n1 {
        for j in 0..g.n_slice() {
            let n = g.node(i, j);
            let d2 = (psi(i as isize, g.shift(j, 0, true)) - psi(i as isize, g.shift(j, 0, false)))
                / (2.0 * hp);
            let d1 = (psi(i as isize + 1, j) - psi(i as isize - 1, j)) / (2.0 * h1);
            values[2 * n] = s.a - d2;
            values[2 * n + 1] = s.background[i] + d1;
        }
    }
    let bc = (
        vec![s.a, s.background[0]],
        vec![s.a, s.background[g.n1 - 1]],
    );
    Field {
        grid: g,
        values,
        bc,
    }
}

/// Pulls a nodal field gradient back to (background, ψ) gradients.
pub(crate) fn stream_adjoint(g: &CylinderGrid, field_grad: &[f64], g_bg: &mut [f64], g_psi: &mut [f64]) {
    let (h1, hp) = (g.h1(), g.hp());
    g_bg.iter_mut().for_each(|v| *v = 0.0);
    g_psi.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..g.n1 {
        for j in 0..g.n_slice() {
            let n = g.node(i, j);
            let (g1, g2) = (field_grad[2 * n], field_grad[2 * n + 1]);
            g_bg[i] += g2;
            g_psi[g.node(i, g.shift(j, 0, true))] -= g1 / (2.0 * hp);
            g_psi[g.node(i, g.shift(j, 0, false))] += g1 / (2.0 * hp);
            if i + 1 < g.n1 {
                g_psi[g.node(i + 1, j)] += g2 / (2.0 * h1);
            }
            if i >= 1 {
                g_psi[g.node(i - 1, j)] -= g2 / (2.0 * h1);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cylinder::{divergence_max, slice_average};
    use crate::numeric::seeded_rng;
    use rand::Rng;

    fn random_stream(seed: u64) -> StreamFunction {
        let g = CylinderGrid::new(2, 3.0, 24, 16).unwrap();
        let mut s = StreamFunction::new(g, 0.25, -1.0, 1.0).unwrap();
        let mut rng = seeded_rng(seed, 1);
        s.psi.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        s.enforce_collar();
        s
    }

    #[test]
    fn stream_fields_are_divergence_free_with_constant_mean() {
        for seed in 0..5 {
            let s = random_stream(seed);
            let f = from_stream(&s);
            assert!(divergence_max(&f) <= 1e-12);
            for avg in slice_average(&f) {
                assert!((avg[0] - 0.25).abs() <= 1e-12);
            }
            assert_eq!(f.at(0, 3), &[0.25, -1.0][..]);
            assert_eq!(f.at(f.grid.n1 - 1, 5), &[0.25, 1.0][..]);
        }
    }

    #[test]
    fn zero_stream_gives_zero_field() {
        let g = CylinderGrid::new(2, 1.0, 8, 8).unwrap();
        let s = StreamFunction::new(g, 0.0, 0.0, 0.0).unwrap();
        assert!(from_stream(&s).values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adjoint_matches_linear_map() {
        let s = random_stream(9);
        let g = s.grid;
        let mut rng = seeded_rng(10, 0);
        let w: Vec<f64> = (0..2 * g.n_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let pair = |s: &StreamFunction| -> f64 {
            from_stream(s).values.iter().zip(&w).map(|(a, b)| a * b).sum()
        };
        let mut gb = vec![0.0; g.n1];
        let mut gp = vec![0.0; g.n_nodes()];
        stream_adjoint(&g, &w, &mut gb, &mut gp);
        let base = pair(&s);
        let mut t = s.clone();
        t.psi[g.node(7, 4)] += 1.0;
        assert!((pair(&t) - base - gp[g.node(7, 4)]).abs() < 1e-9);
        let mut t = s.clone();
        t.background[5] += 1.0;
        assert!((pair(&t) - base - gb[5]).abs() < 1e-9);
    }

    #[test]
    fn smooth_switch_is_monotone_step() {
        assert_eq!(smooth_switch(0.0), 0.0);
        assert_eq!(smooth_switch(1.0), 1.0);
        assert!((smooth_switch(0.5) - 0.5).abs() < 1e-15);
        let mut prev = 0.0;
        for k in 1..100 {
            let v = smooth_switch(k as f64 / 100.0);
            assert!(v >= prev);
            prev = v;
        }
    }
}
