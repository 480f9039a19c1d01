use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::Field;
use crate::potential::Potential;

/// Discrete energy: forward differences on every grid edge for ½|∇u|², and
/// the trapezoid rule in x₁ (uniform on the torus) for W(u).
pub fn energy(p: &dyn Potential, f: &Field) -> f64 {
    energy_impl(p, f, None)
}

/// Energy and its gradient with respect to every nodal value (boundary rows
/// included; callers zero them when they are pinned).
pub fn energy_and_gradient(p: &dyn Potential, f: &Field, grad: &mut [f64]) -> f64 {
    energy_impl(p, f, Some(grad))
}

fn energy_impl(p: &dyn Potential, f: &Field, grad: Option<&mut [f64]>) -> f64 {
    let g = f.grid;
    let d = g.d;
    let ns = g.n_slice();
    let h1 = g.h1();
    let hp = g.hp();
    let vol = h1 * g.slice_cell();
    let row_len = ns * d;
    let want_grad = grad.is_some();

    let rows: Vec<(f64, Vec<f64>)> = (0..g.n1)
        .into_par_iter()
        .map(|i| {
            let wi = g.axial_weight(i);
            let mut e = 0.0;
            let mut gr = if want_grad { vec![0.0; row_len] } else { Vec::new() };
            let mut gw = vec![0.0; d];
            for j in 0..ns {
                let u = f.at(i, j);
                e += wi * vol * p.eval(u);
                if want_grad {
                    p.grad(u, &mut gw);
                    for c in 0..d {
                        gr[j * d + c] += wi * vol * gw[c];
                    }
                }
                for k in 0..d - 1 {
                    let jn = g.shift(j, k, true);
                    let v = f.at(i, jn);
                    for c in 0..d {
                        let diff = (v[c] - u[c]) / hp;
                        e += wi * vol * 0.5 * diff * diff;
                        if want_grad {
                            let s = wi * vol * diff / hp;
                            gr[j * d + c] -= s;
                            gr[jn * d + c] += s;
                        }
                    }
                }
                if i + 1 < g.n1 {
                    let v = f.at(i + 1, j);
                    for c in 0..d {
                        let diff = (v[c] - u[c]) / h1;
                        e += vol * 0.5 * diff * diff;
                        if want_grad {
                            gr[j * d + c] -= vol * diff / h1;
                        }
                    }
                }
                if i > 0 {
                    let v = f.at(i - 1, j);
                    if want_grad {
                        for c in 0..d {
                            gr[j * d + c] += vol * (u[c] - v[c]) / (h1 * h1);
                        }
                    }
                }
            }
            (e, gr)
        })
        .collect();

    let mut total = 0.0;
    if let Some(out) = grad {
        for (i, (e, gr)) in rows.into_iter().enumerate() {
            total += e;
            out[i * row_len..(i + 1) * row_len].copy_from_slice(&gr);
        }
    } else {
        for (e, _) in rows {
            total += e;
        }
    }
    total
}

/// Centered discrete divergence at interior nodes (rows 1..n1−1), zero on
/// the boundary rows.
pub fn divergence(f: &Field) -> Vec<f64> {
    let g = f.grid;
    let ns = g.n_slice();
    let mut out = vec![0.0; g.n_nodes()];
    let (h1, hp) = (g.h1(), g.hp());
    for i in 1..g.n1 - 1 {
        for j in 0..ns {
            let mut s = (f.at(i + 1, j)[0] - f.at(i - 1, j)[0]) / (2.0 * h1);
            for k in 0..g.d - 1 {
                let jp = g.shift(j, k, true);
                let jm = g.shift(j, k, false);
                s += (f.at(i, jp)[k + 1] - f.at(i, jm)[k + 1]) / (2.0 * hp);
            }
            out[g.node(i, j)] = s;
        }
    }
    out
}

pub fn divergence_max(f: &Field) -> f64 {
    divergence(f).iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Torus average ū(x₁) for every axial node.
pub fn slice_average(f: &Field) -> Vec<Vec<f64>> {
    let g = f.grid;
    let ns = g.n_slice();
    (0..g.n1)
        .map(|i| {
            let mut m = vec![0.0; g.d];
            for j in 0..ns {
                for (c, v) in f.at(i, j).iter().enumerate() {
                    m[c] += v;
                }
            }
            m.iter_mut().for_each(|v| *v /= ns as f64);
            m
        })
        .collect()
}

/// max over x₁ of the torus mean of |u − ū|², divided by |u⁺ − u⁻|² (or 1
/// when the boundary values coincide).
pub fn slice_variance(f: &Field) -> f64 {
    let g = f.grid;
    let ns = g.n_slice();
    let d = g.d;
    let jump: f64 = f.bc.0.iter().zip(&f.bc.1).map(|(a, b)| (a - b) * (a - b)).sum();
    let norm = if jump > 0.0 { jump } else { 1.0 };
    let mut worst: f64 = 0.0;
    let mut shift = vec![0.0; d];
    for i in 0..g.n1 {
        // Deviations are taken from the first node so that slices with equal
        // values give exactly zero.
        let base = f.at(i, 0);
        shift.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..ns {
            for (c, s) in shift.iter_mut().enumerate() {
                *s += f.at(i, j)[c] - base[c];
            }
        }
        shift.iter_mut().for_each(|v| *v /= ns as f64);
        let mut s = 0.0;
        for j in 0..ns {
            for c in 0..d {
                let e = f.at(i, j)[c] - base[c] - shift[c];
                s += e * e;
            }
        }
        worst = worst.max(s / ns as f64);
    }
    worst / norm
}

/// Row-major matrix (∂_j u_i) of the centered nodal gradient at an interior node.
pub fn centered_gradient(f: &Field, i: usize, j: usize) -> Vec<f64> {
    let g = f.grid;
    let d = g.d;
    let mut m = vec![0.0; d * d];
    let (h1, hp) = (g.h1(), g.hp());
    let (up, um) = (f.at(i + 1, j), f.at(i - 1, j));
    for c in 0..d {
        m[c * d] = (up[c] - um[c]) / (2.0 * h1);
    }
    for k in 0..d - 1 {
        let (vp, vm) = (f.at(i, g.shift(j, k, true)), f.at(i, g.shift(j, k, false)));
        for c in 0..d {
            m[c * d + k + 1] = (vp[c] - vm[c]) / (2.0 * hp);
        }
    }
    m
}

/// Cell-centred gradient (∂_j u_i) of the cell with lower corner (i, j):
/// each partial derivative averages the 2^{d−1} parallel edge differences.
pub fn box_gradient(f: &Field, i: usize, j: usize) -> (Vec<f64>, Vec<f64>) {
    let g = f.grid;
    let d = g.d;
    let corners = 1usize << d;
    let mut vals: Vec<&[f64]> = Vec::with_capacity(corners);
    for c in 0..corners {
        let ii = i + (c & 1);
        let mut jj = j;
        for k in 0..d - 1 {
            if c >> (k + 1) & 1 == 1 {
                jj = g.shift(jj, k, true);
            }
        }
        vals.push(f.at(ii, jj));
    }
    let spacing = |k: usize| if k == 0 { g.h1() } else { g.hp() };
    let share = 1.0 / (corners / 2) as f64;
    let mut m = vec![0.0; d * d];
    for k in 0..d {
        for c in 0..corners {
            if c >> k & 1 == 1 {
                let lo = c & !(1 << k);
                for comp in 0..d {
                    m[comp * d + k] += share * (vals[c][comp] - vals[lo][comp]) / spacing(k);
                }
            }
        }
    }
    let mut centre = vec![0.0; d];
    for v in &vals {
        for comp in 0..d {
            centre[comp] += v[comp] / corners as f64;
        }
    }
    (m, centre)
}

/// The three integrals ‖Π⁺∇u‖², ‖Π⁻∇u‖² and ½‖∇u‖² with the cell-centred gradient.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JinKohn {
    pub sym: f64,
    pub asym: f64,
    pub half_full: f64,
}

impl JinKohn {
    /// |‖Π⁺∇u‖² − ‖Π⁻∇u‖²| / ‖∇u‖².
    pub fn relative_discrepancy(&self) -> f64 {
        let full = 2.0 * self.half_full;
        if full == 0.0 {
            0.0
        } else {
            (self.sym - self.asym).abs() / full
        }
    }
}

pub fn jin_kohn_check(f: &Field) -> JinKohn {
    let g = f.grid;
    let d = g.d;
    let vol = g.h1() * g.slice_cell();
    let mut out = JinKohn {
        sym: 0.0,
        asym: 0.0,
        half_full: 0.0,
    };
    for i in 0..g.n1 - 1 {
        for j in 0..g.n_slice() {
            let (m, _) = box_gradient(f, i, j);
            for a in 0..d {
                for b in 0..d {
                    let s = 0.5 * (m[a * d + b] + m[b * d + a]);
                    let t = 0.5 * (m[a * d + b] - m[b * d + a]);
                    out.sym += vol * s * s;
                    out.asym += vol * t * t;
                    out.half_full += vol * 0.5 * m[a * d + b] * m[a * d + b];
                }
            }
        }
    }
    out
}
