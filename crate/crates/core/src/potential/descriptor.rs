use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::builtins::{builtin_by_tag, builtin_w_squared, Coefficient, PdeKind};
use super::scalar::Polynomial;
use super::PotentialRef;
use crate::error::{LabError, Result};

/// JSON form of the structural equation for w.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PdeSpec {
    Harmonic,
    Wave,
    /// Constant Tricomi coefficient f.
    Tricomi(f64),
}

/// User-facing description of a potential.
///
/// ```json
/// {"kind": "w_squared", "w": "poly", "coeffs": [[1,0,0], [-0.5,2,0], [-1,0,2]], "pde": {"tricomi": 0.5}}
/// {"kind": "builtin", "tag": "wd3"}
/// ```
/// Polynomial rows are `[c, p₁, p₂]` for the monomial `c·z₁^{p₁} z₂^{p₂}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialDescriptor {
    Builtin {
        tag: String,
    },
    WSquared {
        w: String,
        coeffs: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pde: Option<PdeSpec>,
    },
}

impl PotentialDescriptor {
    pub fn build(&self) -> Result<PotentialRef> {
        match self {
            PotentialDescriptor::Builtin { tag } => builtin_by_tag(tag),
            PotentialDescriptor::WSquared { w, coeffs, pde } => {
                if w != "poly" {
                    return Err(LabError::InvalidArgument(format!(
                        "unsupported w representation `{w}` (expected \"poly\")"
                    )));
                }
                let poly = Polynomial::from_rows(coeffs)?;
                let kind = match pde {
                    None => PdeKind::General,
                    Some(PdeSpec::Harmonic) => PdeKind::Harmonic,
                    Some(PdeSpec::Wave) => PdeKind::Wave,
                    Some(PdeSpec::Tricomi(f)) => PdeKind::Tricomi(Coefficient::constant(*f)),
                };
                Ok(Arc::new(builtin_w_squared(Arc::new(poly), kind)?))
            }
        }
    }
}
