//! Controller files: a preset name with tuning, or an explicit element grid.
//!
//! ```toml
//! preset = "vsg-2"
//! [tuning]
//! kq = 2.0
//! ```
//!
//! ```toml
//! dp = 0.01
//! dq = 0.05
//! grid = [
//!   ["PI(kp=90,ki=400)", "0", "0", "0", "0"],
//!   ["0", "P(k=0.01){IF(k=1,T=0.1672)}", "0", "0", "0"],
//!   ["0", "0", "0", "P(k=0.05)", "0"],
//! ]
//! ```

use serde::{Deserialize, Serialize};

use super::{preset_with_defaults, Element, PhiSpec, Tuning};
use crate::error::{GfmError, Result};
use crate::plant::ConverterParams;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Tuning::is_empty")]
    pub tuning: Tuning,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dq: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<Vec<String>>>,
}

impl ControllerDoc {
    pub fn from_preset(name: &str, tuning: Tuning) -> Self {
        Self { preset: Some(name.to_string()), tuning, ..Self::default() }
    }

    pub fn from_spec(spec: &PhiSpec) -> Self {
        Self {
            dp: Some(spec.dp),
            dq: Some(spec.dq),
            grid: Some(spec.grid.iter().map(|row| row.iter().map(|e| e.to_string()).collect()).collect()),
            ..Self::default()
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| GfmError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| GfmError::Parse(e.to_string()))
    }

    /// Builds the spec. Droop coefficients default to those of `p`.
    pub fn to_spec(&self, p: &ConverterParams) -> Result<PhiSpec> {
        match (&self.preset, &self.grid) {
            (Some(_), Some(_)) => Err(GfmError::Parse("give either `preset` or `grid`, not both".into())),
            (None, None) => Err(GfmError::Parse("controller file needs `preset` or `grid`".into())),
            (Some(name), None) => {
                let mut p = p.clone();
                p.dp = self.dp.unwrap_or(p.dp);
                p.dq = self.dq.unwrap_or(p.dq);
                preset_with_defaults(name, &p, &self.tuning)
            }
            (None, Some(rows)) => {
                if rows.len() != 3 || rows.iter().any(|r| r.len() != 5) {
                    return Err(GfmError::Dimension("grid must be 3 rows of 5 elements".into()));
                }
                let mut spec = PhiSpec::zero(self.dp.unwrap_or(p.dp), self.dq.unwrap_or(p.dq));
                for (i, row) in rows.iter().enumerate() {
                    for (j, text) in row.iter().enumerate() {
                        spec.grid[i][j] = Element::parse(text)
                            .map_err(|e| GfmError::Parse(format!("phi{}{}: {e}", i + 1, j + 1)))?;
                    }
                }
                spec.validate()?;
                Ok(spec)
            }
        }
    }
}

impl PhiSpec {
    pub fn to_toml(&self) -> Result<String> {
        ControllerDoc::from_spec(self).to_toml()
    }

    pub fn from_toml(text: &str, p: &ConverterParams) -> Result<Self> {
        ControllerDoc::parse(text)?.to_spec(p)
    }
}
