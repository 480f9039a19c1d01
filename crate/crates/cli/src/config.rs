//! Experiment configuration shared by every subcommand.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stokes_lab::potential::PotentialDescriptor;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Profile,
    Geodesic,
    Minimize,
    EntropyCheck,
    TricomiCheck,
    Ode3d,
    MetricBuild,
    Calibrate,
    Decompose,
    Sweep,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Profile => "profile",
            CommandKind::Geodesic => "geodesic",
            CommandKind::Minimize => "minimize",
            CommandKind::EntropyCheck => "entropy-check",
            CommandKind::TricomiCheck => "tricomi-check",
            CommandKind::Ode3d => "ode3d",
            CommandKind::MetricBuild => "metric-build",
            CommandKind::Calibrate => "calibrate",
            CommandKind::Decompose => "decompose",
            CommandKind::Sweep => "sweep",
        }
    }

    /// Keys accepted in `params` by this command.
    pub fn param_keys(self) -> &'static [&'static str] {
        match self {
            CommandKind::Profile => &["y_minus", "y_plus", "scan_radius"],
            CommandKind::Geodesic => &["n_nodes", "restarts", "max_iter", "triangle", "scan_radius"],
            CommandKind::Minimize => &["amplitude", "max_iter", "tol", "memory", "trace_every", "scan_radius"],
            CommandKind::EntropyCheck => &["lo", "hi", "n_grid", "n_random", "expect_saturated"],
            CommandKind::TricomiCheck => &["delta", "f", "trials", "amplitude"],
            CommandKind::Ode3d => &["b", "v2", "v3", "t0", "t1", "dt"],
            CommandKind::MetricBuild => &["trials", "grid_n", "geodesic"],
            CommandKind::Calibrate => &["lambda0", "grid_n", "samples"],
            CommandKind::Decompose => &[],
            CommandKind::Sweep => &[],
        }
    }

    /// Keys accepted in `tolerances` by this command.
    pub fn tolerance_keys(self) -> &'static [&'static str] {
        match self {
            CommandKind::Profile => &["equipartition", "energy_vs_cost"],
            CommandKind::Geodesic => &["triangle_margin"],
            CommandKind::Minimize => &["slice_variance", "divergence", "boundary", "upper_bound", "lower_bound"],
            CommandKind::EntropyCheck => &["criterion", "structure", "saturation"],
            CommandKind::TricomiCheck => &["identity_factor"],
            CommandKind::Ode3d => &["tanh", "conservation"],
            CommandKind::MetricBuild => &["reconstruction", "segment", "defeats"],
            CommandKind::Calibrate => &["value", "collinearity", "zero_gradient"],
            CommandKind::Decompose => &["reconstruction"],
            CommandKind::Sweep => &[],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "L")]
    pub l: f64,
    pub n1: usize,
    pub np: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Profile,
    Perturbed,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub over: CommandKind,
    /// `a`, `seed`, `grid.L`, `grid.n1`, `grid.np` or a `params` key.
    pub param: String,
    pub values: Vec<f64>,
}

/// A complete, serializable description of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub command: CommandKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<PotentialDescriptor>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub wells: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entropy: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub subset: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default = "default_true")]
    pub svg: bool,
    pub output_dir: PathBuf,
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    pub fn new(command: CommandKind, output_dir: PathBuf) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            command,
            potential: None,
            wells: Vec::new(),
            a: None,
            grid: None,
            init: None,
            entropy: None,
            subset: Vec::new(),
            seed: 0,
            tolerances: BTreeMap::new(),
            params: BTreeMap::new(),
            input: None,
            sweep: None,
            svg: true,
            output_dir,
        }
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Rejects unsupported schema versions and keys the command does not use.
    pub fn validate(&self) -> Result<(), String> {
        if self.schema != SCHEMA_VERSION {
            return Err(format!("unsupported schema {} (expected {SCHEMA_VERSION})", self.schema));
        }
        let cmd = match (&self.sweep, self.command) {
            (Some(s), CommandKind::Sweep) => s.over,
            _ => self.command,
        };
        for k in self.params.keys() {
            if !cmd.param_keys().contains(&k.as_str()) {
                return Err(format!("unknown parameter `{k}` for {}", cmd.name()));
            }
        }
        for k in self.tolerances.keys() {
            if !cmd.tolerance_keys().contains(&k.as_str()) {
                return Err(format!("unknown tolerance `{k}` for {}", cmd.name()));
            }
        }
        if self.command == CommandKind::Sweep {
            let s = self.sweep.as_ref().ok_or("sweep needs a `sweep` section")?;
            if s.over == CommandKind::Sweep {
                return Err("sweeps cannot be nested".into());
            }
            let structural = ["a", "seed", "grid.L", "grid.n1", "grid.np"];
            if !structural.contains(&s.param.as_str()) && !s.over.param_keys().contains(&s.param.as_str()) {
                return Err(format!("cannot sweep `{}` for {}", s.param, s.over.name()));
            }
        }
        Ok(())
    }

    pub fn param(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).copied().unwrap_or(default)
    }

    pub fn tolerance(&self, key: &str, default: f64) -> f64 {
        self.tolerances.get(key).copied().unwrap_or(default)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ExperimentConfig {
        let mut c = ExperimentConfig::new(CommandKind::Minimize, "out".into());
        c.potential = Some(PotentialDescriptor::Builtin { tag: "gl".into() });
        c.wells = vec![vec![0.0, -1.0], vec![0.0, 1.0]];
        c.a = Some(0.1 + 0.2);
        c.grid = Some(GridConfig { l: 10.0, n1: 256, np: 64 });
        c.init = Some(InitKind::Perturbed);
        c.seed = 7;
        c.params.insert("amplitude".into(), 0.2);
        c.tolerances.insert("slice_variance".into(), 1e-3);
        c
    }

    #[test]
    fn round_trip_is_exact() {
        let c = sample();
        let text = serde_json::to_string_pretty(&c).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.a.unwrap().to_bits(), (0.1f64 + 0.2).to_bits());
        assert_eq!(serde_json::to_string_pretty(&back).unwrap(), text);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let mut v = serde_json::to_value(sample()).unwrap();
        v["colour"] = serde_json::json!("red");
        assert!(serde_json::from_value::<ExperimentConfig>(v).is_err());
        let mut c = sample();
        c.params.insert("bogus".into(), 1.0);
        assert!(c.validate().is_err());
        let mut c = sample();
        c.schema = 2;
        assert!(c.validate().is_err());
    }
}
