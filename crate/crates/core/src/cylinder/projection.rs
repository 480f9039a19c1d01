use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::grid::{CylinderGrid, Field};
use super::ops::divergence;
use crate::error::{LabError, Result};

/// Orthogonal projector onto fields whose centered divergence vanishes at
/// every interior node, with the boundary slices held fixed.
///
/// The normal equations A Aᵀ y = A u are diagonalized by the DFT on the
/// torus; in x₁ the operator couples rows i and i ± 2, so each Fourier mode
/// splits into two tridiagonal solves.
pub struct Projector {
    grid: CylinderGrid,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    sigma: Vec<f64>,
}

impl Projector {
    pub fn new(grid: CylinderGrid) -> Self {
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(grid.np);
        let ifft = planner.plan_fft_inverse(grid.np);
        let hp = grid.hp();
        let sigma = (0..grid.n_slice())
            .map(|j| {
                let mut r = j;
                let mut s = 0.0;
                for _ in 0..grid.d - 1 {
                    let m = r % grid.np;
                    r /= grid.np;
                    let v = (2.0 * std::f64::consts::PI * m as f64 / grid.np as f64).sin() / hp;
                    s += v * v;
                }
                s
            })
            .collect();
        Self {
            grid,
            fft,
            ifft,
            sigma,
        }
    }

    /// Applies u ← u − Aᵀ(AAᵀ)⁻¹ div(u) in place on the interior rows.
    pub fn project_field(&self, f: &mut Field) -> Result<()> {
        if f.grid != self.grid {
            return Err(LabError::InvalidArgument("projector built for another grid".into()));
        }
        f.pin_boundary();
        let r = divergence(f);
        let y = self.solve(&r)?;
        self.subtract_adjoint(&mut f.values, &y);
        Ok(())
    }

    /// Projects a nodal vector onto the tangent space {A v = 0, v = 0 on the
    /// boundary rows}.
    pub fn project_tangent(&self, v: &mut [f64]) -> Result<()> {
        let g = self.grid;
        let zero = vec![0.0; g.d];
        let mut tmp = Field {
            grid: g,
            values: v.to_vec(),
            bc: (zero.clone(), zero),
        };
        tmp.pin_boundary();
        let r = divergence(&tmp);
        let y = self.solve(&r)?;
        self.subtract_adjoint(&mut tmp.values, &y);
        v.copy_from_slice(&tmp.values);
        Ok(())
    }

    fn subtract_adjoint(&self, values: &mut [f64], y: &[f64]) {
        let g = self.grid;
        let d = g.d;
        let (h1, hp) = (g.h1(), g.hp());
        let yy = |i: usize, j: usize| -> f64 {
            if i == 0 || i == g.n1 - 1 {
                0.0
            } else {
                y[g.node(i, j)]
            }
        };
        for i in 1..g.n1 - 1 {
            for j in 0..g.n_slice() {
                let n = g.node(i, j);
                values[n * d] -= (yy(i - 1, j) - yy(i + 1, j)) / (2.0 * h1);
                for k in 0..d - 1 {
                    let jm = g.shift(j, k, false);
                    let jp = g.shift(j, k, true);
                    values[n * d + k + 1] -= (yy(i, jm) - yy(i, jp)) / (2.0 * hp);
                }
            }
        }
    }

    /// Solves A Aᵀ y = r for y on the interior rows.
    fn solve(&self, r: &[f64]) -> Result<Vec<f64>> {
        let g = self.grid;
        let ns = g.n_slice();
        let n1 = g.n1;
        let mut modes = vec![Complex::new(0.0, 0.0); n1 * ns];
        for i in 1..n1 - 1 {
            let row = &mut modes[i * ns..(i + 1) * ns];
            for j in 0..ns {
                row[j] = Complex::new(r[g.node(i, j)], 0.0);
            }
            self.transform(row, true);
        }

        let c = 1.0 / (4.0 * g.h1() * g.h1());
        let unknown = |m: usize| m >= 1 && m + 2 <= n1;
        let mut chain_rows: Vec<usize> = Vec::new();
        let mut rhs: Vec<Complex<f64>> = Vec::new();
        for j in 0..ns {
            for parity in 0..2 {
                chain_rows.clear();
                let mut i = if parity == 0 { 2 } else { 1 };
                while i + 1 < n1 {
                    chain_rows.push(i);
                    i += 2;
                }
                let m = chain_rows.len();
                if m == 0 {
                    continue;
                }
                let mut diag = vec![0.0; m];
                let mut off = vec![0.0; m.saturating_sub(1)];
                rhs.clear();
                for (k, &row) in chain_rows.iter().enumerate() {
                    let mut dv = self.sigma[j];
                    if unknown(row + 1) {
                        dv += c;
                    }
                    if unknown(row - 1) {
                        dv += c;
                    }
                    diag[k] = dv;
                    if k + 1 < m {
                        off[k] = if unknown(row + 1) { -c } else { 0.0 };
                    }
                    rhs.push(modes[row * ns + j]);
                }
                let sol = thomas(&diag, &off, &rhs)?;
                for (k, &row) in chain_rows.iter().enumerate() {
                    modes[row * ns + j] = sol[k];
                }
            }
        }

        let mut y = vec![0.0; g.n_nodes()];
        for i in 1..n1 - 1 {
            let row = &mut modes[i * ns..(i + 1) * ns];
            self.transform(row, false);
            for j in 0..ns {
                y[g.node(i, j)] = row[j].re / ns as f64;
            }
        }
        Ok(y)
    }

    /// Multi-dimensional DFT over the torus directions of one axial row.
    fn transform(&self, row: &mut [Complex<f64>], forward: bool) {
        let np = self.grid.np;
        let plan = if forward { &self.fft } else { &self.ifft };
        match self.grid.d {
            2 => plan.process(row),
            _ => {
                for chunk in row.chunks_exact_mut(np) {
                    plan.process(chunk);
                }
                let mut col = vec![Complex::new(0.0, 0.0); np];
                for a in 0..np {
                    for b in 0..np {
                        col[b] = row[b * np + a];
                    }
                    plan.process(&mut col);
                    for b in 0..np {
                        row[b * np + a] = col[b];
                    }
                }
            }
        }
    }
}

/// Symmetric tridiagonal solve with real coefficients and complex right side.
fn thomas(diag: &[f64], off: &[f64], rhs: &[Complex<f64>]) -> Result<Vec<Complex<f64>>> {
    let n = diag.len();
    let mut cp = vec![0.0; n];
    let mut dp = vec![Complex::new(0.0, 0.0); n];
    let mut denom = diag[0];
    if denom.abs() < 1e-300 {
        return Err(LabError::Solver("singular axial Poisson system".into()));
    }
    cp[0] = if n > 1 { off[0] / denom } else { 0.0 };
    dp[0] = rhs[0] / denom;
    for k in 1..n {
        denom = diag[k] - off[k - 1] * cp[k - 1];
        if denom.abs() < 1e-300 {
            return Err(LabError::Solver("singular axial Poisson system".into()));
        }
        cp[k] = if k + 1 < n { off[k] / denom } else { 0.0 };
        dp[k] = (rhs[k] - dp[k - 1] * off[k - 1]) / denom;
    }
    let mut x = vec![Complex::new(0.0, 0.0); n];
    x[n - 1] = dp[n - 1];
    for k in (0..n - 1).rev() {
        x[k] = dp[k] - x[k + 1] * cp[k];
    }
    Ok(x)
}

/// Returns the divergence-free projection of `f`.
pub fn project_div_free(f: &Field) -> Result<Field> {
    let mut out = f.clone();
    Projector::new(f.grid).project_field(&mut out)?;
    Ok(out)
}
