//! Outcomes of a run and their persistence as `report.json`.

use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::config::ExperimentConfig;

/// One numerical acceptance test: `value` compared against `tolerance`.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    /// `le` means pass iff value ≤ tolerance, `ge` means value ≥ tolerance.
    pub relation: &'static str,
    pub passed: bool,
}

impl Check {
    pub fn le(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            relation: "le",
            passed: value <= tolerance,
        }
    }

    pub fn ge(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            relation: "ge",
            passed: value >= tolerance,
        }
    }
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub checks: Vec<Check>,
    pub results: serde_json::Map<String, Value>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn put(&mut self, key: &str, v: impl Serialize) {
        self.results
            .insert(key.into(), serde_json::to_value(v).expect("serializable result"));
    }

    pub fn check(&mut self, c: Check) {
        self.checks.push(c);
    }
}

#[derive(Serialize)]
struct Report<'a> {
    schema: u32,
    command: &'static str,
    status: &'static str,
    timestamp: String,
    config: &'a ExperimentConfig,
    checks: &'a [Check],
    results: &'a serde_json::Map<String, Value>,
}

pub fn write_report(dir: &Path, cfg: &ExperimentConfig, out: &Outcome) -> std::io::Result<()> {
    let report = Report {
        schema: crate::config::SCHEMA_VERSION,
        command: cfg.command.name(),
        status: if out.passed() { "pass" } else { "fail" },
        timestamp: chrono::Utc::now().to_rfc3339(),
        config: cfg,
        checks: &out.checks,
        results: &out.results,
    };
    let text = serde_json::to_string_pretty(&report).map_err(std::io::Error::other)?;
    std::fs::write(dir.join("report.json"), text + "\n")
}
