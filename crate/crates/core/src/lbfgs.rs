//! Limited-memory BFGS with Armijo backtracking and optional affine
//! projection hooks.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::numeric::dot;

/// A smooth objective on ℝⁿ, optionally restricted to an affine subspace.
pub trait Objective {
    fn dim(&self) -> usize;
    fn value_and_gradient(&self, x: &[f64], g: &mut [f64]) -> f64;

    /// Maps a trial point back onto the feasible set.
    fn project_point(&self, _x: &mut [f64]) {}

    /// Maps a gradient onto the tangent space of the feasible set.
    fn project_gradient(&self, _g: &mut [f64]) {}

    /// Factor turning the Euclidean gradient norm into the reported norm.
    fn gradient_norm_scale(&self) -> f64 {
        1.0
    }

    /// Extra per-iterate diagnostic recorded in the trace.
    fn monitor(&self, _x: &[f64]) -> f64 {
        0.0
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iter: usize,
    /// Stop once the scaled gradient norm drops below this value.
    pub tol: f64,
    pub armijo_c1: f64,
    pub max_backtracks: usize,
    /// Record a trace row every `trace_every` iterations (0 disables).
    pub trace_every: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iter: 5000,
            tol: 1e-6,
            armijo_c1: 1e-4,
            max_backtracks: 50,
            trace_every: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub energy: f64,
    pub grad_norm: f64,
    pub monitor: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TraceRow>,
}

pub fn minimize_lbfgs<O: Objective + ?Sized>(obj: &O, x0: Vec<f64>, opts: &LbfgsOptions) -> LbfgsResult {
    let n = obj.dim();
    let scale = obj.gradient_norm_scale();
    let mut x = x0;
    obj.project_point(&mut x);
    let mut g = vec![0.0; n];
    let mut f = obj.value_and_gradient(&x, &mut g);
    obj.project_gradient(&mut g);
    let mut gnorm = dot(&g, &g).sqrt() * scale;

    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut trace = Vec::new();
    let record = |trace: &mut Vec<TraceRow>, iter: usize, f: f64, gn: f64, x: &[f64]| {
        trace.push(TraceRow {
            iter,
            energy: f,
            grad_norm: gn,
            monitor: obj.monitor(x),
        });
    };
    if opts.trace_every > 0 {
        record(&mut trace, 0, f, gnorm, &x);
    }

    let mut iterations = 0;
    let mut converged = gnorm < opts.tol;
    let mut xt = vec![0.0; n];
    let mut gt = vec![0.0; n];
    let mut alpha_buf = vec![0.0; opts.memory];
    while !converged && iterations < opts.max_iter {
        // Two-loop recursion for d = −H g.
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        for (k, (s, y, rho)) in hist.iter().enumerate().rev() {
            let a = rho * dot(s, &d);
            alpha_buf[k] = a;
            d.iter_mut().zip(y).for_each(|(di, yi)| *di -= a * yi);
        }
        let gamma = match hist.back() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => 1.0 / dot(&g, &g).sqrt().max(1e-300),
        };
        d.iter_mut().for_each(|v| *v *= gamma);
        for (k, (s, y, rho)) in hist.iter().enumerate() {
            let b = rho * dot(y, &d);
            let a = alpha_buf[k];
            d.iter_mut().zip(s).for_each(|(di, si)| *di += (a - b) * si);
        }
        obj.project_gradient(&mut d);
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            hist.clear();
            d = g.iter().map(|v| -v).collect();
            let gg = dot(&g, &g).sqrt().max(1e-300);
            d.iter_mut().for_each(|v| *v /= gg);
            slope = dot(&g, &d);
        }

        let mut step = 1.0;
        let mut accepted = false;
        let mut ft = f;
        for _ in 0..opts.max_backtracks {
            xt.iter_mut()
                .zip(x.iter().zip(&d))
                .for_each(|(t, (xi, di))| *t = xi + step * di);
            obj.project_point(&mut xt);
            ft = obj.value_and_gradient(&xt, &mut gt);
            if ft.is_finite() && ft <= f + opts.armijo_c1 * step * slope {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        if !accepted {
            if hist.is_empty() {
                break;
            }
            hist.clear();
            continue;
        }
        obj.project_gradient(&mut gt);
        let s: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if hist.len() == opts.memory {
                hist.pop_front();
            }
            hist.push_back((s, y, 1.0 / sy));
        }
        std::mem::swap(&mut x, &mut xt);
        std::mem::swap(&mut g, &mut gt);
        f = ft;
        gnorm = dot(&g, &g).sqrt() * scale;
        converged = gnorm < opts.tol;
        if opts.trace_every > 0 && (iterations % opts.trace_every == 0 || converged) {
            record(&mut trace, iterations, f, gnorm, &x);
        }
    }
    LbfgsResult {
        x,
        value: f,
        grad_norm: gnorm,
        iterations,
        converged,
        trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Rosenbrock;

    impl Objective for Rosenbrock {
        fn dim(&self) -> usize {
            2
        }
        fn value_and_gradient(&self, x: &[f64], g: &mut [f64]) -> f64 {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        }
    }

    /// Quadratic restricted to the plane x₀ + x₁ + x₂ = 1.
    struct OnPlane;

    impl Objective for OnPlane {
        fn dim(&self) -> usize {
            3
        }
        fn value_and_gradient(&self, x: &[f64], g: &mut [f64]) -> f64 {
            let w = [1.0, 2.0, 4.0];
            let mut f = 0.0;
            for i in 0..3 {
                g[i] = w[i] * x[i];
                f += 0.5 * w[i] * x[i] * x[i];
            }
            f
        }
        fn project_point(&self, x: &mut [f64]) {
            let shift = (x.iter().sum::<f64>() - 1.0) / 3.0;
            x.iter_mut().for_each(|v| *v -= shift);
        }
        fn project_gradient(&self, g: &mut [f64]) {
            let m = g.iter().sum::<f64>() / 3.0;
            g.iter_mut().for_each(|v| *v -= m);
        }
    }

    #[test]
    fn solves_rosenbrock() {
        let r = minimize_lbfgs(&Rosenbrock, vec![-1.2, 1.0], &LbfgsOptions::default());
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] - 1.0).abs() < 1e-5);
        assert!(r.trace.windows(2).all(|w| w[1].energy <= w[0].energy));
    }

    #[test]
    fn respects_affine_constraint() {
        let opts = LbfgsOptions {
            tol: 1e-12,
            ..LbfgsOptions::default()
        };
        let r = minimize_lbfgs(&OnPlane, vec![3.0, -1.0, 0.5], &opts);
        assert!(r.converged);
        // Lagrange: w_i x_i = λ, Σ x_i = 1 gives x ∝ (4, 2, 1)/7.
        let expect = [4.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0];
        for i in 0..3 {
            assert!((r.x[i] - expect[i]).abs() < 1e-7);
        }
    }
}
