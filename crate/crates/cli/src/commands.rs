//! One function per subcommand. Each reads an [`ExperimentConfig`], writes its
//! data files into the output directory and returns the checks it ran.

use std::fs;
use std::sync::Arc;

use serde_json::json;
use stokes_lab::cylinder::{
    embed_profile, energy, minimize, random_admissible_field, slice_average,
    CylinderGrid, Field, Init, MinimizeOptions,
};
use stokes_lab::entropy::{
    check_punctual, check_saturation, entropy_by_tag, ode3d_solve, sample_box, traceless,
    tricomi_identity_check, entropy_tricomi, calibration_value, Entropy, TricomiOptions,
};
use stokes_lab::metric::{
    build_weight_w, calibration_phi, decompose_cuts, validate_pseudo_metric, verify_segment_optimality,
    weight_grid_csv, FiniteMetric, SegmentAuditOptions,
};
use stokes_lab::numeric::{dot, norm};
use stokes_lab::potential::{
    builtin_by_tag, find_wells_on_slice, Coefficient, Polynomial, Potential, PotentialRef,
};
use stokes_lab::profile::{
    check_triangle_strict, energy_1d, geodesic_cost, geodesic_cost_2d, reparametrize_equipartition,
    solve_profile_ode, GeodesicOptions, OdeOptions, PathSpace,
};
use stokes_lab::LabError;

use crate::config::{CommandKind, ExperimentConfig, InitKind};
use crate::report::{Check, Outcome};
use crate::svg;

/// Failure of a run, split by exit status.
#[derive(Debug)]
pub enum RunError {
    /// Malformed input or an unmet precondition (exit 1).
    Usage(String),
    /// A computation that could not produce a verdict (exit 2).
    Numerical(String),
}

impl From<LabError> for RunError {
    fn from(e: LabError) -> Self {
        match e {
            LabError::Dimension { .. }
            | LabError::InvalidArgument(_)
            | LabError::UnknownPotential(_)
            | LabError::Calibration(_)
            | LabError::Io(_) => RunError::Usage(e.to_string()),
            _ => RunError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Usage(e.to_string())
    }
}

type Run = Result<Outcome, RunError>;

pub fn run(cfg: &ExperimentConfig) -> Run {
    cfg.validate().map_err(RunError::Usage)?;
    fs::create_dir_all(&cfg.output_dir)?;
    match cfg.command {
        CommandKind::Profile => profile(cfg),
        CommandKind::Geodesic => geodesic(cfg),
        CommandKind::Minimize => minimize_cmd(cfg),
        CommandKind::EntropyCheck => entropy_check(cfg),
        CommandKind::TricomiCheck => tricomi_check(cfg),
        CommandKind::Ode3d => ode3d(cfg),
        CommandKind::MetricBuild => metric_build(cfg),
        CommandKind::Calibrate => calibrate(cfg),
        CommandKind::Decompose => decompose(cfg),
        CommandKind::Sweep => sweep(cfg),
    }
}

fn write(cfg: &ExperimentConfig, name: &str, content: &str) -> Result<(), RunError> {
    fs::write(cfg.output_dir.join(name), content)?;
    Ok(())
}

fn write_svg(cfg: &ExperimentConfig, name: &str, content: impl FnOnce() -> String) -> Result<(), RunError> {
    if cfg.svg {
        write(cfg, name, &content())?;
    }
    Ok(())
}

fn potential(cfg: &ExperimentConfig) -> Result<PotentialRef, RunError> {
    let desc = cfg
        .potential
        .as_ref()
        .ok_or_else(|| RunError::Usage(format!("{} needs a potential", cfg.command.name())))?;
    Ok(desc.build()?)
}

/// The configured end states, or the extreme wells found on the slice.
fn end_states(cfg: &ExperimentConfig, p: &dyn Potential, a: f64) -> Result<(Vec<f64>, Vec<f64>), RunError> {
    let d = p.dim();
    match cfg.wells.len() {
        2 => {
            if cfg.wells.iter().any(|w| w.len() != d) {
                return Err(RunError::Usage(format!("wells must have {d} coordinates")));
            }
            Ok((cfg.wells[0].clone(), cfg.wells[1].clone()))
        }
        0 => {
            let r = cfg.param("scan_radius", 2.5);
            let scan = find_wells_on_slice(p, a, &vec![-r; d - 1], &vec![r; d - 1], 61)?;
            let mut wells: Vec<Vec<f64>> = scan.wells.into_iter().map(|w| w.point).collect();
            if wells.len() < 2 {
                return Err(RunError::Usage(format!("fewer than two wells on the slice z1 = {a}")));
            }
            wells.sort_by(|x, y| x[1..].partial_cmp(&y[1..]).unwrap());
            Ok((wells[0].clone(), wells[wells.len() - 1].clone()))
        }
        n => Err(RunError::Usage(format!("expected two wells, got {n}"))),
    }
}

fn profile(cfg: &ExperimentConfig) -> Run {
    let p = potential(cfg)?;
    let a = cfg.a.unwrap_or(0.0);
    let (um, up) = if p.dim() == 2 && (cfg.params.contains_key("y_minus") || cfg.params.contains_key("y_plus")) {
        (vec![a, cfg.param("y_minus", -1.0)], vec![a, cfg.param("y_plus", 1.0)])
    } else {
        end_states(cfg, p.as_ref(), a)?
    };
    let (prof, cost) = if p.dim() == 2 {
        let prof = solve_profile_ode(p.as_ref(), a, um[1], up[1], &OdeOptions::default())?;
        (prof, geodesic_cost_2d(p.as_ref(), a, um[1], up[1])?)
    } else {
        let g = geodesic_cost(p.as_ref(), PathSpace::Slice(a), &um, &up, &GeodesicOptions::default())?;
        (reparametrize_equipartition(p.as_ref(), &g.path)?, g.cost)
    };
    let e = energy_1d(p.as_ref(), &prof);
    let mut out = Outcome::default();
    out.put("potential", p.tag());
    out.put("u_minus", &um);
    out.put("u_plus", &up);
    out.put("energy", e);
    out.put("geodesic_cost", cost);
    out.put("attached", prof.attached);
    out.put("truncated", prof.truncated(p.as_ref()));
    out.check(Check::le("equipartition_residual", prof.equipartition_residual, cfg.tolerance("equipartition", 1e-6)));
    out.check(Check::le("energy_minus_cost", (e - cost).abs(), cfg.tolerance("energy_vs_cost", 1e-4)));
    write(cfg, "profile.csv", &prof.to_csv())?;
    write_svg(cfg, "profile.svg", || {
        let series: Vec<(String, Vec<(f64, f64)>)> = (1..prof.dim())
            .map(|k| {
                let pts = prof.t_samples.iter().zip(&prof.values).map(|(&t, z)| (t, z[k])).collect();
                (format!("z{}", k + 1), pts)
            })
            .collect();
        svg::line_plot("transition profile", "t", "component", &series, false)
    })?;
    Ok(out)
}

fn geodesic(cfg: &ExperimentConfig) -> Run {
    let p = potential(cfg)?;
    let a = cfg.a;
    let (um, up) = end_states(cfg, p.as_ref(), a.unwrap_or(0.0))?;
    let space = a.map_or(PathSpace::Ambient, PathSpace::Slice);
    let opts = GeodesicOptions {
        n_nodes: cfg.param("n_nodes", 400.0) as usize,
        n_restarts: cfg.param("restarts", 5.0) as usize,
        max_iter: cfg.param("max_iter", 1500.0) as usize,
        seed: cfg.seed,
        initial_paths: Vec::new(),
    };
    let res = geodesic_cost(p.as_ref(), space, &um, &up, &opts)?;
    let mut out = Outcome::default();
    out.put("space", space);
    out.put("u_minus", &um);
    out.put("u_plus", &up);
    out.put("cost", res.cost);
    out.put("discrete_cost", res.discrete_cost);
    out.put("converged", res.converged);
    out.put("n_nodes", res.n_nodes);
    if cfg.param("triangle", 0.0) != 0.0 {
        let a = a.ok_or_else(|| RunError::Usage("the triangle audit needs a slice `a`".into()))?;
        let d = p.dim();
        let r = cfg.param("scan_radius", 2.5);
        let scan = find_wells_on_slice(p.as_ref(), a, &vec![-r; d - 1], &vec![r; d - 1], 61)?;
        let wells: Vec<Vec<f64>> = scan.wells.into_iter().map(|w| w.point).collect();
        let tri = check_triangle_strict(p.as_ref(), a, &wells, &um, &up, &opts)?;
        let min_margin = tri.rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
        if !tri.rows.is_empty() {
            out.check(Check::ge("min_triangle_margin", min_margin, cfg.tolerance("triangle_margin", tri.numerical_margin)));
        }
        out.put("triangle", tri);
    }
    write(cfg, "path.csv", &res.path.to_csv())?;
    write_svg(cfg, "path.svg", || {
        let (i, j) = if p.dim() == 2 { (0, 1) } else { (1, 2) };
        let pts = res.path.points.iter().map(|z| (z[i], z[j])).collect();
        svg::line_plot("geodesic", &format!("z{}", i + 1), &format!("z{}", j + 1), &[("path".into(), pts)], false)
    })?;
    Ok(out)
}

fn grid_of(cfg: &ExperimentConfig, d: usize, default: (f64, usize, usize)) -> Result<CylinderGrid, RunError> {
    let g = cfg.grid.unwrap_or(crate::config::GridConfig {
        l: default.0,
        n1: default.1,
        np: default.2,
    });
    Ok(CylinderGrid::new(d, g.l, g.n1, g.np)?)
}

fn minimize_cmd(cfg: &ExperimentConfig) -> Run {
    let p = potential(cfg)?;
    let d = p.dim();
    let a = cfg.a.unwrap_or(0.0);
    let (um, up) = end_states(cfg, p.as_ref(), a)?;
    let grid = grid_of(cfg, d, if d == 2 { (10.0, 256, 64) } else { (6.0, 96, 16) })?;
    let init = match cfg.init.unwrap_or(InitKind::Perturbed) {
        InitKind::Profile => Init::ProfileEmbed,
        InitKind::Perturbed => Init::Perturbed {
            amplitude: cfg.param("amplitude", 0.2),
            seed: cfg.seed,
        },
        InitKind::Random => Init::Random { seed: cfg.seed },
    };
    let opts = MinimizeOptions {
        tol: cfg.param("tol", 1e-6),
        max_iter: cfg.param("max_iter", 4000.0) as usize,
        memory: cfg.param("memory", 10.0) as usize,
        trace_every: cfg.param("trace_every", 1.0).max(1.0) as usize,
    };
    let (field, report) = minimize(p.as_ref(), grid, &um, &up, &init, &opts)?;
    let prof = embed_profile(p.as_ref(), &um, &up, grid.l);
    let layer = Field::from_profile(grid, (um.clone(), up.clone()), |t| prof.eval(t));
    let e_layer = energy(p.as_ref(), &layer);
    let mut out = Outcome::default();
    out.put("grid", grid);
    out.put("u_minus", &um);
    out.put("u_plus", &up);
    out.put("energy", report.energy);
    out.put("layer_energy", e_layer);
    out.put("iterations", report.iterations);
    out.put("grad_norm", report.grad_norm);
    out.put("converged", report.converged);
    out.put("residual_stokes", report.residual_stokes);
    out.check(Check::le("slice_variance", report.slice_variance, cfg.tolerance("slice_variance", 1e-3)));
    out.check(Check::le("divergence_max", report.divergence_max, cfg.tolerance("divergence", 1e-8)));
    out.check(Check::le("boundary_avg_error", report.boundary_avg_error, cfg.tolerance("boundary", 1e-8)));
    out.check(Check::le("energy_minus_layer", report.energy - e_layer, cfg.tolerance("upper_bound", 1e-3)));
    if let Some(tag) = &cfg.entropy {
        let e = entropy_by_tag(tag)?;
        let lower = calibration_value(&e, &field)?;
        out.put("calibration_value", lower);
        out.check(Check::ge("energy_minus_calibration", report.energy - lower, -cfg.tolerance("lower_bound", 1e-3)));
    }
    write(cfg, "trace.csv", &report.trace_csv())?;
    field.write_snapshot(&cfg.output_dir.join("field.bin"))?;
    let avg = slice_average(&field);
    let mut slices = String::from("x1");
    for k in 1..=d {
        slices.push_str(&format!(",avg_u{k}"));
    }
    slices.push('\n');
    for (i, v) in avg.iter().enumerate() {
        slices.push_str(&format!("{:.10e}", grid.x1(i)));
        for c in v {
            slices.push_str(&format!(",{c:.15e}"));
        }
        slices.push('\n');
    }
    write(cfg, "slice_average.csv", &slices)?;
    write_svg(cfg, "energy.svg", || {
        let e: Vec<(f64, f64)> = report.trace.iter().map(|r| (r.iter as f64, r.energy - e_layer.min(report.energy) + 1e-16)).collect();
        let g: Vec<(f64, f64)> = report.trace.iter().map(|r| (r.iter as f64, r.grad_norm)).collect();
        svg::line_plot("energy trace", "iteration", "value", &[("E - min(E, E_layer)".into(), e), ("grad norm".into(), g)], true)
    })?;
    write_svg(cfg, "field.svg", || {
        let ny = grid.np;
        let vals: Vec<f64> = (0..grid.n1)
            .flat_map(|i| (0..ny).map(move |j| (i, j)))
            .map(|(i, j)| field.at(i, j)[1])
            .collect();
        svg::heatmap("u2 on the section", "x1", "x2", grid.n1, ny, (-grid.l, grid.l), (0.0, 1.0), &vals)
    })?;
    out.put("report", report_without_trace(&report));
    Ok(out)
}

fn report_without_trace(r: &stokes_lab::cylinder::MinimizeReport) -> serde_json::Value {
    let mut v = serde_json::to_value(r).expect("serializable");
    if let Some(m) = v.as_object_mut() {
        m.remove("trace");
    }
    v
}

/// |Π₀∇Φ|² − cW at z.
fn criterion_defect(e: &Entropy, p: &dyn Potential, z: &[f64]) -> f64 {
    let m = traceless(&e.jac(z));
    m.norm_squared() - e.kind.criterion_constant() * p.eval(z)
}

fn default_partner(entropy: &str) -> Option<String> {
    let t = entropy.to_ascii_lowercase();
    if t.starts_with("gl_wave") || t.starts_with("wave_gl") {
        Some("gl_wave".into())
    } else if t.contains("z1z2") {
        Some("z1z2".into())
    } else if let Some(r) = t.strip_prefix("tricomi") {
        Some(format!("tricomi{r}"))
    } else {
        t.strip_prefix("phi").map(|r| format!("wd{r}"))
    }
}

fn entropy_check(cfg: &ExperimentConfig) -> Run {
    let tag = cfg
        .entropy
        .as_ref()
        .ok_or_else(|| RunError::Usage("entropy-check needs an entropy tag".into()))?;
    let e = entropy_by_tag(tag)?;
    let p: PotentialRef = match &cfg.potential {
        Some(desc) => desc.build()?,
        None => builtin_by_tag(&default_partner(tag).ok_or_else(|| RunError::Usage("no default potential".into()))?)?,
    };
    let d = e.dim;
    let (lo, hi) = (cfg.param("lo", -2.0), cfg.param("hi", 2.0));
    let n_grid = cfg.param("n_grid", if d == 2 { 41.0 } else { 11.0 }) as usize;
    let samples = sample_box(&vec![lo; d], &vec![hi; d], n_grid, cfg.param("n_random", 2000.0) as usize, cfg.seed);
    let rep = check_punctual(&e, p.as_ref(), &samples, e.kind)?;
    let mut out = Outcome::default();
    out.put("entropy", &e.tag);
    out.put("potential", p.tag());
    out.check(Check::le("max_violation", rep.max_violation, cfg.tolerance("criterion", 1e-9)));
    out.check(Check::le("structure_residual", rep.structure_residual, cfg.tolerance("structure", 1e-9)));
    if cfg.wells.len() == 2 {
        let a = cfg.a.unwrap_or(cfg.wells[0][0]);
        let sat = check_saturation(&e, p.as_ref(), a, &cfg.wells[0], &cfg.wells[1])?;
        if cfg.param("expect_saturated", 0.0) != 0.0 {
            out.check(Check::le("saturation_gap", sat.gap.abs(), cfg.tolerance("saturation", 1e-4)));
        }
        out.put("saturation", sat);
    }
    out.put("punctual", &rep);
    let n = 81;
    let xs: Vec<f64> = (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect();
    let mut csv = String::from("z1,z2,defect\n");
    let mut vals = Vec::with_capacity(n * n);
    for &x in &xs {
        for &y in &xs {
            let mut z = vec![0.0; d];
            z[0] = x;
            z[1] = y;
            let v = criterion_defect(&e, p.as_ref(), &z);
            csv.push_str(&format!("{x:.8e},{y:.8e},{v:.12e}\n"));
            vals.push(v);
        }
    }
    write(cfg, "criterion_grid.csv", &csv)?;
    write_svg(cfg, "criterion.svg", || {
        svg::heatmap("|P0 grad Phi|^2 - cW on the (z1,z2) section", "z1", "z2", n, n, (lo, hi), (lo, hi), &vals)
    })?;
    Ok(out)
}

fn tricomi_check(cfg: &ExperimentConfig) -> Run {
    let delta = cfg.param("delta", 0.5);
    let f = cfg.param("f", delta);
    let w = Arc::new(Polynomial::tricomi_quadratic(delta));
    let tri = entropy_tricomi(w.clone(), Coefficient::constant(f), &TricomiOptions::default())?;
    let grid = grid_of(cfg, 2, (2.0, 64, 32))?;
    let h = grid.h();
    let factor = cfg.tolerance("identity_factor", 10.0);
    let trials = cfg.param("trials", 50.0) as usize;
    let amp = cfg.param("amplitude", 0.3);
    let (um, up) = (vec![0.0, -1.0], vec![0.0, 1.0]);
    let mut csv = String::from("trial,lhs,rhs,residual\n");
    let mut worst: f64 = 0.0;
    for t in 0..trials {
        let field = random_admissible_field(grid, &um, &up, amp, cfg.seed.wrapping_add(t as u64))?;
        let id = tricomi_identity_check(w.clone(), Coefficient::constant(f), &field)?;
        csv.push_str(&format!("{t},{:.15e},{:.15e},{:.6e}\n", id.lhs, id.rhs, id.residual));
        worst = worst.max(id.residual);
    }
    let mut out = Outcome::default();
    out.put("delta", delta);
    out.put("f", f);
    out.put("h", h);
    out.put("construction", &tri.audit);
    out.put("max_residual", worst);
    out.check(Check::le("identity_residual", worst, factor * h * h));
    write(cfg, "identity.csv", &csv)?;
    Ok(out)
}

fn ode3d(cfg: &ExperimentConfig) -> Run {
    let b = cfg.param("b", 1.0);
    let v0 = [cfg.param("v2", 0.0), cfg.param("v3", 0.0)];
    let span = (cfg.param("t0", -6.0), cfg.param("t1", 10.0));
    let traj = ode3d_solve(b, v0, span, cfg.param("dt", 1e-3))?;
    let mut out = Outcome::default();
    out.put("b", b);
    out.put("v0", v0);
    out.put("blew_up", traj.blew_up);
    out.put("alpha_limit", traj.alpha_limit);
    out.put("omega_limit", traj.omega_limit);
    out.put("v3_range", traj.v3_range());
    if v0[1] == 0.0 && v0[0].abs() < b {
        let shift = (v0[0] / b).atanh() / b;
        let err = traj
            .t
            .iter()
            .zip(&traj.v)
            .map(|(&t, v)| (v[0] - b * (b * (t + shift)).tanh()).abs().max(v[1].abs()))
            .fold(0.0, f64::max);
        out.check(Check::le("tanh_error", err, cfg.tolerance("tanh", 1e-6)));
    }
    if (v0[0] + v0[1] - 1.0).abs() <= 1e-15 && b == 1.0 {
        let err = traj.v.iter().map(|v| (v[0] + v[1] - 1.0).abs()).fold(0.0, f64::max);
        out.check(Check::le("line_conservation", err, cfg.tolerance("conservation", 1e-8)));
    }
    write(cfg, "trajectory.csv", &traj.to_csv())?;
    write_svg(cfg, "phase.svg", || {
        let pts = traj.v.iter().map(|v| (v[0], v[1])).collect();
        svg::line_plot("phase portrait", "v2", "v3", &[("trajectory".into(), pts)], false)
    })?;
    Ok(out)
}

fn read_input(cfg: &ExperimentConfig) -> Result<String, RunError> {
    let path = cfg
        .input
        .as_ref()
        .ok_or_else(|| RunError::Usage(format!("{} needs --input", cfg.command.name())))?;
    fs::read_to_string(path).map_err(|e| RunError::Usage(format!("{}: {e}", path.display())))
}

fn read_metric(cfg: &ExperimentConfig) -> Result<FiniteMetric, RunError> {
    serde_json::from_str(&read_input(cfg)?).map_err(|e| RunError::Usage(format!("metric file: {e}")))
}

fn metric_build(cfg: &ExperimentConfig) -> Run {
    let metric = read_metric(cfg)?;
    let w = build_weight_w(&metric)?;
    let opts = SegmentAuditOptions {
        trials: cfg.param("trials", 200.0) as usize,
        seed: cfg.seed,
        run_geodesic: cfg.param("geodesic", 1.0) != 0.0,
        ..Default::default()
    };
    let audit = verify_segment_optimality(&w, &opts)?;
    let mut out = Outcome::default();
    out.put("lambda0", w.lambda0);
    out.put("rho", w.rho);
    out.put("lipschitz_estimate", w.lipschitz_estimate);
    out.put("positive_off_x", w.positive_off_x);
    out.put("decomposition", &w.decomposition);
    out.check(Check::le("reconstruction_residual", w.decomposition.residual, cfg.tolerance("reconstruction", 1e-9)));
    out.check(Check::le("max_segment_error", audit.max_segment_error, cfg.tolerance("segment", opts.perturbed_tol)));
    out.check(Check::le("segment_defeats", audit.total_defeats as f64, cfg.tolerance("defeats", 0.0)));
    write(cfg, "audit.json", &(serde_json::to_string_pretty(&audit).expect("serializable") + "\n"))?;
    write(cfg, "decomposition.json", &(serde_json::to_string_pretty(&w.decomposition).expect("serializable") + "\n"))?;
    let n = cfg.param("grid_n", 101.0) as usize;
    let csv = weight_grid_csv(&w, n);
    write(cfg, "weight_grid.csv", &csv)?;
    write_svg(cfg, "weight.svg", || {
        let rows: Vec<Vec<f64>> = csv
            .lines()
            .skip(1)
            .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
            .collect();
        let vals: Vec<f64> = rows.iter().map(|r| r[2]).collect();
        let xr = (rows[0][0], rows[rows.len() - 1][0]);
        let yr = (rows[0][1], rows[rows.len() - 1][1]);
        svg::heatmap("weight w", "x1", "x2", n.max(2), n.max(2), xr, yr, &vals)
    })?;
    out.put("audit_pass", audit.pass);
    Ok(out)
}

fn calibrate(cfg: &ExperimentConfig) -> Run {
    let metric = read_metric(cfg)?;
    if cfg.subset.is_empty() {
        return Err(RunError::Usage("calibrate needs a cut (--cut 0,2)".into()));
    }
    let lambda0 = cfg.params.get("lambda0").copied();
    let c = calibration_phi(&metric.points, &cfg.subset, lambda0)?;
    let pts = &metric.points;
    let n = pts.len();
    let d = metric.dim();
    let mut value_err: f64 = 0.0;
    for (k, x) in pts.iter().enumerate() {
        let want = if c.y.contains(&k) { 0.0 } else { 1.0 };
        value_err = value_err.max((c.value(x) - want).abs());
    }
    let samples = cfg.param("samples", 50.0) as usize;
    let (mut cross, mut zero, mut min_inner) = (0.0f64, 0.0f64, f64::INFINITY);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let e: Vec<f64> = (0..d).map(|k| pts[j][k] - pts[i][k]).collect();
            let crossing = c.y.contains(&i) && !c.y.contains(&j);
            let same = c.y.contains(&i) == c.y.contains(&j);
            for s in 0..samples {
                let t = 0.05 + 0.9 * s as f64 / (samples.max(2) - 1) as f64;
                let z: Vec<f64> = (0..d).map(|k| pts[i][k] + t * e[k]).collect();
                let g = c.gradient(&z);
                if same {
                    zero = zero.max(norm(&g));
                } else if crossing {
                    let along = dot(&g, &e) / norm(&e);
                    cross = cross.max((dot(&g, &g) - along * along).max(0.0).sqrt());
                    min_inner = min_inner.min(dot(&g, &e));
                }
            }
        }
    }
    let mut out = Outcome::default();
    out.put("lambda0", c.lambda0);
    out.put("lambda0_audit", &c.audit);
    out.put("lipschitz_estimate", c.lipschitz_estimate(100));
    out.put("support_radius", c.support_radius());
    out.check(Check::le("value_error", value_err, cfg.tolerance("value", 1e-10)));
    out.check(Check::le("collinearity_defect", cross, cfg.tolerance("collinearity", 1e-6)));
    out.check(Check::le("same_side_gradient", zero, cfg.tolerance("zero_gradient", 1e-10)));
    out.check(Check::ge("min_inner_product", min_inner, f64::MIN_POSITIVE));
    if d >= 2 {
        let gn = cfg.param("grid_n", 81.0) as usize;
        let gn = gn.max(2);
        let lo: Vec<f64> = (0..2).map(|k| pts.iter().map(|p| p[k]).fold(f64::INFINITY, f64::min) - 0.25).collect();
        let hi: Vec<f64> = (0..2).map(|k| pts.iter().map(|p| p[k]).fold(f64::NEG_INFINITY, f64::max) + 0.25).collect();
        let centre: Vec<f64> = (0..d).map(|k| pts.iter().map(|p| p[k]).sum::<f64>() / n as f64).collect();
        let mut csv = String::from("x1,x2,phi,grad_norm\n");
        let mut vals = Vec::with_capacity(gn * gn);
        for a in 0..gn {
            for b in 0..gn {
                let mut z = centre.clone();
                z[0] = lo[0] + (hi[0] - lo[0]) * a as f64 / (gn - 1) as f64;
                z[1] = lo[1] + (hi[1] - lo[1]) * b as f64 / (gn - 1) as f64;
                let (v, g) = c.value_and_gradient(&z);
                csv.push_str(&format!("{:.8e},{:.8e},{v:.12e},{:.12e}\n", z[0], z[1], norm(&g)));
                vals.push(v);
            }
        }
        write(cfg, "phi_grid.csv", &csv)?;
        write_svg(cfg, "phi.svg", || {
            svg::heatmap("calibration phi", "x1", "x2", gn, gn, (lo[0], hi[0]), (lo[1], hi[1]), &vals)
        })?;
    }
    Ok(out)
}

fn decompose(cfg: &ExperimentConfig) -> Run {
    let v: serde_json::Value =
        serde_json::from_str(&read_input(cfg)?).map_err(|e| RunError::Usage(format!("input: {e}")))?;
    let delta: Vec<Vec<f64>> = serde_json::from_value(v.get("delta").cloned().unwrap_or(json!(null)))
        .map_err(|_| RunError::Usage("input needs a `delta` matrix".into()))?;
    let validation = validate_pseudo_metric(&delta);
    if !validation.valid {
        return Err(RunError::Usage(format!(
            "not a pseudo-metric: triangle violation {:e} at {:?}",
            validation.max_triangle_violation, validation.worst_triple
        )));
    }
    let dec = decompose_cuts(&delta)?;
    let mut out = Outcome::default();
    out.put("validation", &validation);
    out.put("feasible", dec.feasible);
    out.check(Check::le("reconstruction_residual", dec.residual, cfg.tolerance("reconstruction", 1e-9)));
    write(cfg, "decomposition.json", &(serde_json::to_string_pretty(&dec).expect("serializable") + "\n"))?;
    out.put("decomposition", dec);
    Ok(out)
}

fn sweep(cfg: &ExperimentConfig) -> Run {
    let plan = cfg.sweep.as_ref().expect("validated");
    let mut csv = format!("{},status", plan.param);
    let mut rows = Vec::new();
    let mut out = Outcome::default();
    for (k, &v) in plan.values.iter().enumerate() {
        let mut sub = cfg.clone();
        sub.command = plan.over;
        sub.sweep = None;
        sub.output_dir = cfg.output_dir.join(format!("run{k:03}"));
        match plan.param.as_str() {
            "a" => sub.a = Some(v),
            "seed" => sub.seed = v as u64,
            "grid.L" | "grid.n1" | "grid.np" => {
                let mut g = sub.grid.ok_or_else(|| RunError::Usage("sweeping a grid field needs `grid`".into()))?;
                match plan.param.as_str() {
                    "grid.L" => g.l = v,
                    "grid.n1" => g.n1 = v as usize,
                    _ => g.np = v as usize,
                }
                sub.grid = Some(g);
            }
            key => {
                sub.params.insert(key.into(), v);
            }
        }
        let res = run(&sub)?;
        crate::report::write_report(&sub.output_dir, &sub, &res)?;
        if k == 0 {
            for c in &res.checks {
                csv.push_str(&format!(",{}", c.name));
            }
            csv.push('\n');
        }
        csv.push_str(&format!("{v},{}", if res.passed() { "pass" } else { "fail" }));
        for c in &res.checks {
            csv.push_str(&format!(",{:.12e}", c.value));
        }
        csv.push('\n');
        for c in res.checks {
            out.check(Check { name: format!("{}[{}={v}]", c.name, plan.param), ..c });
        }
        rows.push(json!({"value": v, "dir": format!("run{k:03}"), "results": res.results}));
    }
    write(cfg, "sweep.csv", &csv)?;
    out.put("runs", rows);
    Ok(out)
}
