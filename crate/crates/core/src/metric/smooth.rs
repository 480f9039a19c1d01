//! The smooth step g and a small forward-mode dual number.

use std::ops::{Add, Mul, Neg, Sub};
use std::sync::OnceLock;

use crate::numeric::gauss_legendre8;

fn bump(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        (-1.0 / (t * (1.0 - t))).exp()
    }
}

const CELLS: usize = 1024;

struct Table {
    /// ∫₀^{k/(2·CELLS)} bump, k = 0..=CELLS.
    cumulative: Vec<f64>,
    /// ∫₀¹ bump.
    total: f64,
}

fn table() -> &'static Table {
    static TABLE: OnceLock<Table> = OnceLock::new();
    TABLE.get_or_init(|| {
        let h = 0.5 / CELLS as f64;
        let mut cumulative = Vec::with_capacity(CELLS + 1);
        let mut acc = 0.0;
        cumulative.push(0.0);
        for k in 0..CELLS {
            acc += gauss_legendre8(bump, k as f64 * h, (k + 1) as f64 * h);
            cumulative.push(acc);
        }
        Table {
            total: 2.0 * acc,
            cumulative,
        }
    })
}

fn lower_half(t: f64) -> f64 {
    let tb = table();
    let h = 0.5 / CELLS as f64;
    let k = ((t / h).floor() as usize).min(CELLS - 1);
    let partial = gauss_legendre8(bump, k as f64 * h, t);
    (tb.cumulative[k] + partial) / tb.total
}

/// g(t) and g′(t): g = 0 for t ≤ 0, g = 1 for t ≥ 1, g′ > 0 on (0, 1) and
/// g(t) + g(1 − t) = 1.
pub fn smooth_g(t: f64) -> (f64, f64) {
    if t <= 0.0 {
        return (0.0, 0.0);
    }
    if t >= 1.0 {
        return (1.0, 0.0);
    }
    let d = bump(t) / table().total;
    if t <= 0.5 {
        (lower_half(t), d)
    } else {
        (1.0 - lower_half(1.0 - t), d)
    }
}

/// max g′ = g′(½).
pub fn max_slope() -> f64 {
    smooth_g(0.5).1
}

/// Largest ambient dimension handled by [`Jet`].
pub const MAX_DIM: usize = 6;

/// Value and gradient carried through arithmetic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub g: [f64; MAX_DIM],
}

impl Jet {
    pub fn constant(v: f64) -> Self {
        Self { v, g: [0.0; MAX_DIM] }
    }

    /// The coordinate function z_k evaluated at `value`.
    pub fn variable(value: f64, k: usize) -> Self {
        let mut g = [0.0; MAX_DIM];
        g[k] = 1.0;
        Self { v: value, g }
    }

    fn chain(self, v: f64, dv: f64) -> Self {
        let mut g = self.g;
        g.iter_mut().for_each(|x| *x *= dv);
        Self { v, g }
    }

    pub fn scale(self, c: f64) -> Self {
        self.chain(self.v * c, c)
    }

    pub fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s)
    }

    pub fn recip(self) -> Self {
        self.chain(1.0 / self.v, -1.0 / (self.v * self.v))
    }

    /// g applied to the jet.
    pub fn smooth_g(self) -> Self {
        let (v, d) = smooth_g(self.v);
        self.chain(v, d)
    }

    pub fn gradient(&self, d: usize) -> Vec<f64> {
        self.g[..d].to_vec()
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(mut self, o: Jet) -> Jet {
        self.v += o.v;
        self.g.iter_mut().zip(o.g).for_each(|(a, b)| *a += b);
        self
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let mut g = [0.0; MAX_DIM];
        for k in 0..MAX_DIM {
            g[k] = self.g[k] * o.v + self.v * o.g[k];
        }
        Jet { v: self.v * o.v, g }
    }
}
