//! `stokes-lab`: run transition-layer experiments and write `report.json`.
//!
//! Exit status is 0 when every check passes, 2 when a check fails or a
//! computation breaks down, and 1 for usage, configuration or precondition
//! errors.

mod commands;
mod config;
mod report;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stokes_lab::potential::PotentialDescriptor;

use commands::RunError;
use config::{CommandKind, ExperimentConfig, GridConfig, InitKind};

#[derive(Parser, Debug)]
#[command(name = "stokes-lab", version, about = "Transition layers, geodesic costs and entropy bounds")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Run an experiment described by a JSON config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Optimal 1D profile on a slice and its energy.
    Profile(Opts),
    /// Degenerate geodesic between two wells, on a slice or in the ambient space.
    Geodesic(Opts),
    /// Minimize the divergence-free energy on the truncated cylinder.
    Minimize(Opts),
    /// Sample the punctual entropy criterion on a box.
    EntropyCheck(Opts),
    /// Verify the integral identity for the Tricomi entropies on random fields.
    TricomiCheck(Opts),
    /// Integrate the reduced three-dimensional profile ODE.
    Ode3d(Opts),
    /// Build the weight realizing a finite metric and audit straight segments.
    MetricBuild(Opts),
    /// Evaluate the calibration function for one cut of a point set.
    Calibrate(Opts),
    /// Decompose a finite metric into cut metrics.
    Decompose(Opts),
}

#[derive(Args, Debug, Default)]
struct Common {
    /// Directory for report.json and data files.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Skip SVG figures.
    #[arg(long)]
    no_svg: bool,
    /// Override a parameter, `key=value`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Override a tolerance, `key=value`.
    #[arg(long = "tol", value_name = "KEY=VALUE")]
    tol: Vec<String>,
}

#[derive(Args, Debug)]
struct Opts {
    /// Builtin potential tag such as `gl`, `z1z2`, `tricomi0.5` or `wd3`.
    #[arg(long)]
    potential: Option<String>,
    /// Slice coordinate z1 = a.
    #[arg(long, allow_hyphen_values = true)]
    a: Option<f64>,
    /// End state as comma-separated coordinates; give it twice.
    #[arg(long = "well", allow_hyphen_values = true)]
    wells: Vec<String>,
    /// Cylinder grid as `L,n1,np`.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long, value_parser = parse_init)]
    init: Option<InitKind>,
    /// Entropy tag such as `gl_wave`, `tricomi0.5` or `phi3`.
    #[arg(long)]
    entropy: Option<String>,
    /// Input JSON (a finite metric for metric-build, calibrate and decompose).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Cut subset Y as comma-separated point indices.
    #[arg(long)]
    cut: Option<String>,
    #[command(flatten)]
    common: Common,
}

fn parse_init(s: &str) -> Result<InitKind, String> {
    match s {
        "profile" => Ok(InitKind::Profile),
        "perturbed" => Ok(InitKind::Perturbed),
        "random" => Ok(InitKind::Random),
        _ => Err(format!("unknown init `{s}` (profile, perturbed or random)")),
    }
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, String> {
    s.split(',')
        .map(|x| x.trim().parse::<T>().map_err(|_| format!("bad {what} `{s}`")))
        .collect()
}

fn parse_kv(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got `{s}`"))?;
    let v: f64 = v.trim().parse().map_err(|_| format!("bad number in `{s}`"))?;
    Ok((k.trim().to_string(), v))
}

fn apply_common(cfg: &mut ExperimentConfig, c: &Common) -> Result<(), String> {
    if let Some(dir) = &c.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if c.no_svg {
        cfg.svg = false;
    }
    for s in &c.set {
        let (k, v) = parse_kv(s)?;
        cfg.params.insert(k, v);
    }
    for s in &c.tol {
        let (k, v) = parse_kv(s)?;
        cfg.tolerances.insert(k, v);
    }
    Ok(())
}

fn from_opts(kind: CommandKind, o: Opts) -> Result<ExperimentConfig, String> {
    let mut cfg = ExperimentConfig::new(kind, PathBuf::from(format!("out/{}", kind.name())));
    cfg.potential = o.potential.map(|tag| PotentialDescriptor::Builtin { tag });
    cfg.a = o.a;
    cfg.wells = o.wells.iter().map(|w| parse_list(w, "well")).collect::<Result<_, _>>()?;
    if let Some(g) = &o.grid {
        let v: Vec<f64> = parse_list(g, "grid")?;
        if v.len() != 3 {
            return Err(format!("grid must be `L,n1,np`, got `{g}`"));
        }
        cfg.grid = Some(GridConfig {
            l: v[0],
            n1: v[1] as usize,
            np: v[2] as usize,
        });
    }
    cfg.init = o.init;
    cfg.entropy = o.entropy;
    cfg.input = o.input;
    if let Some(c) = &o.cut {
        cfg.subset = parse_list(c, "cut")?;
    }
    apply_common(&mut cfg, &o.common)?;
    Ok(cfg)
}

fn build_config(cli: Cli) -> Result<ExperimentConfig, String> {
    let cfg = match cli.command {
        Cmd::Run { config, common } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            apply_common(&mut cfg, &common)?;
            cfg
        }
        Cmd::Profile(o) => from_opts(CommandKind::Profile, o)?,
        Cmd::Geodesic(o) => from_opts(CommandKind::Geodesic, o)?,
        Cmd::Minimize(o) => from_opts(CommandKind::Minimize, o)?,
        Cmd::EntropyCheck(o) => from_opts(CommandKind::EntropyCheck, o)?,
        Cmd::TricomiCheck(o) => from_opts(CommandKind::TricomiCheck, o)?,
        Cmd::Ode3d(o) => from_opts(CommandKind::Ode3d, o)?,
        Cmd::MetricBuild(o) => from_opts(CommandKind::MetricBuild, o)?,
        Cmd::Calibrate(o) => from_opts(CommandKind::Calibrate, o)?,
        Cmd::Decompose(o) => from_opts(CommandKind::Decompose, o)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("STOKES_LAB_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| format!("STOKES_LAB_THREADS must be a positive integer, got `{v}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let cfg = match build_config(cli).and_then(|c| init_threads().map(|_| c)) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    };
    let out = match commands::run(&cfg) {
        Ok(o) => o,
        Err(RunError::Usage(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
        Err(RunError::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = report::write_report(&cfg.output_dir, &cfg, &out) {
        eprintln!("error: cannot write report: {e}");
        return ExitCode::from(1);
    }
    for c in &out.checks {
        let op = if c.relation == "le" { "<=" } else { ">=" };
        println!(
            "{} {}: {:.3e} {op} {:.3e}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.tolerance
        );
    }
    println!("report: {}", cfg.output_dir.join("report.json").display());
    if out.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}
