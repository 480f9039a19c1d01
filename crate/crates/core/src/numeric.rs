//! Small numerical kernels shared across modules: vector helpers,
//! quadrature rules and a fixed-step Runge–Kutta integrator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn lerp(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
}

/// Deterministic child generator derived from a master seed and a stream index.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Central finite-difference gradient of a scalar function.
pub fn fd_gradient<F: Fn(&[f64]) -> f64>(f: F, z: &[f64], out: &mut [f64]) {
    let mut zp = z.to_vec();
    for i in 0..z.len() {
        let h = 1e-6 * (1.0 + z[i].abs());
        zp[i] = z[i] + h;
        let fp = f(&zp);
        zp[i] = z[i] - h;
        let fm = f(&zp);
        zp[i] = z[i];
        out[i] = (fp - fm) / (2.0 * h);
    }
}

/// Adaptive Simpson quadrature with an absolute tolerance.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Composite Simpson rule on `n` panels (rounded up to even); exact for cubics.
pub fn composite_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    if a == b {
        return 0.0;
    }
    let n = (n.max(2) + 1) & !1;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        let x = a + h * k as f64;
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    s * h / 3.0
}

const GL8_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_47,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];

/// Eight-point Gauss–Legendre rule on `[a, b]`.
pub fn gauss_legendre8<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    GL8_NODES
        .iter()
        .zip(GL8_WEIGHTS.iter())
        .map(|(x, w)| w * f(c + r * x))
        .sum::<f64>()
        * r
}

/// One classical RK4 step for an autonomous system.
pub fn rk4_step<F: Fn(&[f64], &mut [f64])>(f: &F, y: &mut [f64], dt: f64) {
    let n = y.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    f(y, &mut k1);
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * dt * k1[i];
    }
    f(&tmp, &mut k2);
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * dt * k2[i];
    }
    f(&tmp, &mut k3);
    for i in 0..n {
        tmp[i] = y[i] + dt * k3[i];
    }
    f(&tmp, &mut k4);
    for i in 0..n {
        y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Least-squares slope of `log(err)` against `log(h)`.
pub fn fitted_order(h: &[f64], err: &[f64]) -> f64 {
    let xs: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = err.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_rules_integrate_cubics_exactly() {
        let f = |x: f64| 1.0 - 3.0 * x + x * x * x;
        let exact = |x: f64| x - 1.5 * x * x + 0.25 * x.powi(4);
        let want = exact(2.0) - exact(-1.0);
        assert!((composite_simpson(f, -1.0, 2.0, 2) - want).abs() < 1e-13);
        assert!((adaptive_simpson(&f, -1.0, 2.0, 1e-12) - want).abs() < 1e-12);
    }

    #[test]
    fn gauss_legendre_handles_degree_fifteen() {
        let v = gauss_legendre8(|x| x.powi(14), 0.0, 1.0);
        assert!((v - 1.0 / 15.0).abs() < 1e-14);
    }

    #[test]
    fn rk4_tracks_exponential_decay() {
        let mut y = vec![1.0];
        for _ in 0..100 {
            rk4_step(&|y: &[f64], d: &mut [f64]| d[0] = -y[0], &mut y, 0.01);
        }
        assert!((y[0] - (-1.0f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn order_fit_recovers_power_law() {
        let h = [0.1, 0.05, 0.025];
        let e: Vec<f64> = h.iter().map(|x| 3.0 * x * x).collect();
        assert!((fitted_order(&h, &e) - 2.0).abs() < 1e-12);
    }
}
