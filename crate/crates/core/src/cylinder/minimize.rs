use rand::Rng;
use serde::{Deserialize, Serialize};

use super::grid::{CylinderGrid, Field};
use super::ops::{divergence_max, energy_and_gradient, slice_average, slice_variance};
use super::projection::Projector;
use super::stream::{free_rows, from_stream, smooth_switch, stream_adjoint, StreamFunction};
use crate::error::{LabError, Result};
use crate::lbfgs::{minimize_lbfgs, LbfgsOptions, Objective, TraceRow};
use crate::numeric::{dist, seeded_rng};
use crate::potential::Potential;
use crate::profile::{
    geodesic_cost, reparametrize_equipartition, sample_profile, solve_profile_ode, GeodesicOptions,
    OdeOptions, PathSpace, Profile1D,
};

/// Starting point for [`minimize`].
#[derive(Clone, Debug)]
pub enum Init {
    /// The optimal one-dimensional layer, constant in x′.
    ProfileEmbed,
    /// The embedded layer plus smooth seeded noise whose largest nodal
    /// displacement is `amplitude · |u⁺ − u⁻|`.
    Perturbed { amplitude: f64, seed: u64 },
    /// A smooth switch between the end states plus large seeded noise.
    Random { seed: u64 },
    Field(Field),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MinimizeOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub memory: usize,
    pub trace_every: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 4000,
            memory: 10,
            trace_every: 1,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MinimizeReport {
    pub energy: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub slice_variance: f64,
    /// Largest deviation of the end-slice averages from the boundary data.
    pub boundary_avg_error: f64,
    pub converged: bool,
    pub divergence_max: f64,
    pub residual_stokes: f64,
    pub trace: Vec<TraceRow>,
}

impl MinimizeReport {
    /// Convergence trace with columns iter, energy, grad_norm, slice_variance.
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("iter,energy,grad_norm,slice_variance\n");
        for r in &self.trace {
            s.push_str(&format!("{},{:.15e},{:.6e},{:.6e}\n", r.iter, r.energy, r.grad_norm, r.monitor));
        }
        s
    }
}

/// Minimizes the discrete energy over divergence-free fields with the given
/// Dirichlet data.
pub fn minimize(
    p: &dyn Potential,
    grid: CylinderGrid,
    u_minus: &[f64],
    u_plus: &[f64],
    init: &Init,
    opts: &MinimizeOptions,
) -> Result<(Field, MinimizeReport)> {
    let d = grid.d;
    if p.dim() != d || u_minus.len() != d || u_plus.len() != d {
        return Err(LabError::Dimension {
            expected: d,
            got: p.dim(),
        });
    }
    if (u_minus[0] - u_plus[0]).abs() > 1e-12 {
        return Err(LabError::InvalidArgument(
            "end states must share their first coordinate".into(),
        ));
    }
    let tol = p.well_tolerance();
    for z in [u_minus, u_plus] {
        if p.eval(z) > tol {
            return Err(LabError::InvalidArgument(format!("{z:?} is not a well")));
        }
    }
    let lopts = LbfgsOptions {
        memory: opts.memory,
        max_iter: opts.max_iter,
        tol: opts.tol,
        trace_every: opts.trace_every,
        ..LbfgsOptions::default()
    };
    let field = match d {
        2 => {
            let s0 = initial_stream(p, grid, u_minus, u_plus, init)?;
            let obj = StreamObjective::new(p, s0.clone());
            let res = minimize_lbfgs(&obj, obj.encode(&s0), &lopts);
            let f = from_stream(&obj.decode(&res.x));
            (f, res)
        }
        _ => {
            let f0 = initial_field(p, grid, u_minus, u_plus, init)?;
            let obj = ProjectedObjective {
                p,
                projector: Projector::new(grid),
                template: f0.clone(),
            };
            let res = minimize_lbfgs(&obj, f0.values.clone(), &lopts);
            let mut f = f0;
            f.values = res.x.clone();
            (f, res)
        }
    };
    let (f, res) = field;
    if !f.is_finite() {
        return Err(LabError::Solver("minimization produced non-finite values".into()));
    }
    let avg = slice_average(&f);
    let boundary_avg_error = dist(&avg[0], u_minus).max(dist(&avg[grid.n1 - 1], u_plus));
    let report = MinimizeReport {
        energy: res.value,
        iterations: res.iterations,
        grad_norm: res.grad_norm,
        slice_variance: slice_variance(&f),
        boundary_avg_error,
        converged: res.converged,
        divergence_max: divergence_max(&f),
        residual_stokes: residual_stokes(p, &f)?,
        trace: res.trace,
    };
    Ok((f, report))
}

/// L² norm of the divergence-free part of −Δu + ∇W(u) over interior nodes.
pub fn residual_stokes(p: &dyn Potential, f: &Field) -> Result<f64> {
    let g = f.grid;
    let d = g.d;
    let vol = g.h1() * g.slice_cell();
    let mut r = vec![0.0; f.values.len()];
    energy_and_gradient(p, f, &mut r);
    for i in 0..g.n1 {
        let scale = if i == 0 || i == g.n1 - 1 {
            0.0
        } else {
            1.0 / (g.axial_weight(i) * vol)
        };
        for j in 0..g.n_slice() {
            let n = g.node(i, j);
            r[n * d..(n + 1) * d].iter_mut().for_each(|v| *v *= scale);
        }
    }
    Projector::new(g).project_tangent(&mut r)?;
    Ok((r.iter().map(|v| v * v).sum::<f64>() * vol).sqrt())
}

/// The optimal 1D layer between the end states, centred at x₁ = 0.
pub fn embed_profile(p: &dyn Potential, u_minus: &[f64], u_plus: &[f64], l: f64) -> Profile1D {
    if dist(u_minus, u_plus) < 1e-14 {
        return Profile1D::constant(u_minus.to_vec());
    }
    let a = u_minus[0];
    let solved = if p.dim() == 2 {
        solve_profile_ode(p, a, u_minus[1], u_plus[1], &OdeOptions::default()).ok()
    } else {
        let opts = GeodesicOptions {
            n_nodes: 200,
            n_restarts: 3,
            ..GeodesicOptions::default()
        };
        geodesic_cost(p, PathSpace::Slice(a), u_minus, u_plus, &opts)
            .and_then(|g| reparametrize_equipartition(p, &g.path))
            .ok()
    };
    solved.unwrap_or_else(|| {
        let (um, up) = (u_minus.to_vec(), u_plus.to_vec());
        sample_profile(
            move |t| {
                let s = 0.5 * (1.0 + t.tanh());
                um.iter().zip(&up).map(|(a, b)| a + (b - a) * s).collect()
            },
            -l,
            l,
            2001,
        )
    })
}

/// Smooth seeded noise on the cylinder vanishing at x₁ = ±L, with `comps`
/// components.
fn smooth_noise(grid: CylinderGrid, comps: usize, seed: u64) -> Vec<f64> {
    let mut rng = seeded_rng(seed, 17);
    let nd = grid.d - 1;
    let modes: Vec<(Vec<f64>, f64, f64, f64, Vec<f64>)> = (0..6)
        .map(|_| {
            let mut k = vec![0.0; nd];
            while k.iter().all(|&v| v == 0.0) {
                k.iter_mut().for_each(|v| *v = rng.gen_range(-3i32..=3) as f64);
            }
            let kx = rng.gen_range(0.0..2.0);
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            let theta = rng.gen_range(0.0..std::f64::consts::TAU);
            let amp: Vec<f64> = (0..comps).map(|_| rng.gen_range(-1.0..1.0)).collect();
            (k, kx, phase, theta, amp)
        })
        .collect();
    let l = grid.l;
    let sigma = l / 4.0;
    let mut out = vec![0.0; grid.n_nodes() * comps];
    for i in 0..grid.n1 {
        let x1 = grid.x1(i);
        let window = (-x1 * x1 / (2.0 * sigma * sigma)).exp() * (1.0 - (x1 / l).powi(2)).max(0.0).powi(2);
        for j in 0..grid.n_slice() {
            let xp = grid.xp(j);
            let n = grid.node(i, j);
            for (k, kx, phase, theta, amp) in &modes {
                let arg: f64 = k.iter().zip(&xp).map(|(a, b)| a * b).sum::<f64>();
                let s = window
                    * (std::f64::consts::TAU * arg + phase).cos()
                    * (kx * x1 + theta).cos()
                    / k.iter().map(|v| v * v).sum::<f64>().sqrt();
                for c in 0..comps {
                    out[n * comps + c] += amp[c] * s;
                }
            }
        }
    }
    out
}

fn max_nodal_norm(values: &[f64], d: usize) -> f64 {
    values
        .chunks_exact(d)
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

fn initial_stream(
    p: &dyn Potential,
    grid: CylinderGrid,
    u_minus: &[f64],
    u_plus: &[f64],
    init: &Init,
) -> Result<StreamFunction> {
    let a = u_minus[0];
    let mut s = StreamFunction::new(grid, a, u_minus[1], u_plus[1])?;
    let span = dist(u_minus, u_plus);
    let noise_amp = match init {
        Init::Field(f) => {
            if f.grid != grid {
                return Err(LabError::InvalidArgument("initial field on another grid".into()));
            }
            let avg = slice_average(f);
            s.background = avg.iter().map(|v| v[1]).collect();
            s.background[0] = u_minus[1];
            s.background[grid.n1 - 1] = u_plus[1];
            // ψ is recovered from u₂ − ū₂ by integrating D₁ψ along x₁.
            let h1 = grid.h1();
            for j in 0..grid.n_slice() {
                for i in 1..grid.n1 - 1 {
                    if free_rows(&grid).contains(&(i + 1)) {
                        let du = f.at(i, j)[1] - avg[i][1];
                        s.psi[grid.node(i + 1, j)] = s.psi[grid.node(i - 1, j)] + 2.0 * h1 * du;
                    }
                }
            }
            s.enforce_collar();
            return Ok(s);
        }
        Init::ProfileEmbed => None,
        Init::Perturbed { amplitude, seed } => Some((amplitude * span, *seed)),
        Init::Random { seed } => Some((0.5 * span.max(1.0), *seed)),
    };
    if !matches!(init, Init::Random { .. }) {
        let prof = embed_profile(p, u_minus, u_plus, grid.l);
        for i in 1..grid.n1 - 1 {
            s.background[i] = prof.eval(grid.x1(i))[1];
        }
    }
    if let Some((amp, seed)) = noise_amp {
        let noise = smooth_noise(grid, 1, seed);
        let mut pert = StreamFunction {
            grid,
            psi: noise,
            background: vec![0.0; grid.n1],
            a: 0.0,
        };
        pert.enforce_collar();
        let peak = max_nodal_norm(&from_stream(&pert).values, 2);
        if peak > 0.0 {
            let scale = amp / peak;
            s.psi = pert.psi.iter().map(|v| v * scale).collect();
        }
    }
    Ok(s)
}

fn initial_field(
    p: &dyn Potential,
    grid: CylinderGrid,
    u_minus: &[f64],
    u_plus: &[f64],
    init: &Init,
) -> Result<Field> {
    let bc = (u_minus.to_vec(), u_plus.to_vec());
    let span = dist(u_minus, u_plus);
    let projector = Projector::new(grid);
    let (mut f, noise) = match init {
        Init::Field(f) => {
            if f.grid != grid {
                return Err(LabError::InvalidArgument("initial field on another grid".into()));
            }
            let mut f = f.clone();
            f.bc = bc;
            (f, None)
        }
        Init::ProfileEmbed => {
            let prof = embed_profile(p, u_minus, u_plus, grid.l);
            (Field::from_profile(grid, bc, |t| prof.eval(t)), None)
        }
        Init::Perturbed { amplitude, seed } => {
            let prof = embed_profile(p, u_minus, u_plus, grid.l);
            (
                Field::from_profile(grid, bc, |t| prof.eval(t)),
                Some((amplitude * span, *seed)),
            )
        }
        Init::Random { seed } => {
            let (um, up) = (u_minus.to_vec(), u_plus.to_vec());
            let f = Field::from_fn(grid, bc, |x1, _| {
                let s = 0.5 * (1.0 + x1.tanh());
                um.iter().zip(&up).map(|(a, b)| a + (b - a) * s).collect()
            });
            (f, Some((0.5 * span.max(1.0), *seed)))
        }
    };
    if let Some((amp, seed)) = noise {
        let mut n = smooth_noise(grid, grid.d, seed);
        projector.project_tangent(&mut n)?;
        let peak = max_nodal_norm(&n, grid.d);
        if peak > 0.0 {
            f.values.iter_mut().zip(&n).for_each(|(v, e)| *v += amp * e / peak);
        }
    }
    projector.project_field(&mut f)?;
    Ok(f)
}

/// A smooth divergence-free field with the given end states: a switch
/// between u⁻ and u⁺ plus seeded noise whose largest nodal displacement is
/// `amplitude · max(|u⁺ − u⁻|, 1)`. Used to draw admissible competitors.
pub fn random_admissible_field(
    grid: CylinderGrid,
    u_minus: &[f64],
    u_plus: &[f64],
    amplitude: f64,
    seed: u64,
) -> Result<Field> {
    let d = grid.d;
    if u_minus.len() != d || u_plus.len() != d {
        return Err(LabError::Dimension {
            expected: d,
            got: u_minus.len().min(u_plus.len()),
        });
    }
    if (u_minus[0] - u_plus[0]).abs() > 1e-12 {
        return Err(LabError::InvalidArgument(
            "end states must share their first coordinate".into(),
        ));
    }
    let amp = amplitude * dist(u_minus, u_plus).max(1.0);
    if d == 2 {
        let mut s = StreamFunction::new(grid, u_minus[0], u_minus[1], u_plus[1])?;
        let mut pert = StreamFunction {
            grid,
            psi: smooth_noise(grid, 1, seed),
            background: vec![0.0; grid.n1],
            a: 0.0,
        };
        pert.enforce_collar();
        let peak = max_nodal_norm(&from_stream(&pert).values, 2);
        if peak > 0.0 {
            s.psi = pert.psi.iter().map(|v| v * amp / peak).collect();
        }
        return Ok(from_stream(&s));
    }
    let projector = Projector::new(grid);
    let bc = (u_minus.to_vec(), u_plus.to_vec());
    let mut f = Field::from_fn(grid, bc, |x1, _| {
        let t = smooth_switch(0.5 + x1 / (2.0 * grid.l));
        u_minus.iter().zip(u_plus).map(|(a, b)| a + (b - a) * t).collect()
    });
    let mut n = smooth_noise(grid, d, seed);
    projector.project_tangent(&mut n)?;
    let peak = max_nodal_norm(&n, d);
    if peak > 0.0 {
        f.values.iter_mut().zip(&n).for_each(|(v, e)| *v += amp * e / peak);
    }
    projector.project_field(&mut f)?;
    Ok(f)
}

struct StreamObjective<'a> {
    p: &'a dyn Potential,
    template: StreamFunction,
    n_bg: usize,
}

impl<'a> StreamObjective<'a> {
    fn new(p: &'a dyn Potential, template: StreamFunction) -> Self {
        let n_bg = template.grid.n1 - 2;
        Self { p, template, n_bg }
    }

    fn encode(&self, s: &StreamFunction) -> Vec<f64> {
        let g = s.grid;
        let mut x = s.background[1..g.n1 - 1].to_vec();
        for i in free_rows(&g) {
            x.extend_from_slice(&s.psi[g.node(i, 0)..g.node(i + 1, 0)]);
        }
        x
    }

    fn decode(&self, x: &[f64]) -> StreamFunction {
        let mut s = self.template.clone();
        let g = s.grid;
        s.background[1..g.n1 - 1].copy_from_slice(&x[..self.n_bg]);
        let ns = g.n_slice();
        for (k, i) in free_rows(&g).enumerate() {
            let off = self.n_bg + k * ns;
            s.psi[g.node(i, 0)..g.node(i + 1, 0)].copy_from_slice(&x[off..off + ns]);
        }
        s
    }
}

impl Objective for StreamObjective<'_> {
    fn dim(&self) -> usize {
        let g = self.template.grid;
        self.n_bg + free_rows(&g).len() * g.n_slice()
    }

    fn value_and_gradient(&self, x: &[f64], out: &mut [f64]) -> f64 {
        let s = self.decode(x);
        let g = s.grid;
        let f = from_stream(&s);
        let mut fg = vec![0.0; f.values.len()];
        let e = energy_and_gradient(self.p, &f, &mut fg);
        let mut gb = vec![0.0; g.n1];
        let mut gp = vec![0.0; g.n_nodes()];
        stream_adjoint(&g, &fg, &mut gb, &mut gp);
        out[..self.n_bg].copy_from_slice(&gb[1..g.n1 - 1]);
        let ns = g.n_slice();
        for (k, i) in free_rows(&g).enumerate() {
            let off = self.n_bg + k * ns;
            out[off..off + ns].copy_from_slice(&gp[g.node(i, 0)..g.node(i + 1, 0)]);
        }
        e
    }

    fn gradient_norm_scale(&self) -> f64 {
        let g = self.template.grid;
        1.0 / (g.h1() * g.slice_cell()).sqrt()
    }

    fn monitor(&self, x: &[f64]) -> f64 {
        slice_variance(&from_stream(&self.decode(x)))
    }
}

struct ProjectedObjective<'a> {
    p: &'a dyn Potential,
    projector: Projector,
    template: Field,
}

impl ProjectedObjective<'_> {
    fn field(&self, x: &[f64]) -> Field {
        let mut f = self.template.clone();
        f.values.copy_from_slice(x);
        f
    }
}

impl Objective for ProjectedObjective<'_> {
    fn dim(&self) -> usize {
        self.template.values.len()
    }

    fn value_and_gradient(&self, x: &[f64], g: &mut [f64]) -> f64 {
        energy_and_gradient(self.p, &self.field(x), g)
    }

    fn project_point(&self, x: &mut [f64]) {
        let mut f = self.field(x);
        if self.projector.project_field(&mut f).is_ok() {
            x.copy_from_slice(&f.values);
        }
    }

    fn project_gradient(&self, g: &mut [f64]) {
        let _ = self.projector.project_tangent(g);
    }

    fn gradient_norm_scale(&self) -> f64 {
        let g = self.template.grid;
        1.0 / (g.h1() * g.slice_cell()).sqrt()
    }

    fn monitor(&self, x: &[f64]) -> f64 {
        slice_variance(&self.field(x))
    }
}
