use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("intermediate well at y = {y} (W = {value:e}) between the end wells")]
    IntermediateWell { y: f64, value: f64 },

    #[error("Tricomi coefficient violates |f| <= 1: f({at}) = {value}")]
    TricomiCoefficient { at: f64, value: f64 },

    #[error("entropy construction rejected: {0}")]
    EntropyRejected(String),

    #[error("calibration setup failed: {0}")]
    Calibration(String),

    #[error("cut decomposition infeasible (best residual {residual:e})")]
    Infeasible { residual: f64 },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("unknown potential tag `{0}`")]
    UnknownPotential(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for LabError {
    fn from(e: serde_json::Error) -> Self {
        LabError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
