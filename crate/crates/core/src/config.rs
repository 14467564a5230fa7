//! TOML documents for converter parameters and scenarios.
//!
//! Every document names its units. Parameter files in SI units carry the
//! base quantities and component values:
//!
//! ```toml
//! units = "si"
//! [base]
//! sn = 4000.0
//! vn = 380.0
//! vdc_base = 700.0
//! [values]
//! omega_n = 314.159
//! lf = 2e-3
//! # ...
//! ```
//!
//! Per-unit files hold [`ConverterParams`] under `[values]`. Scenario files
//! give times in seconds and event values either in p.u. or, with
//! `units = "si"`, in W, var, V (line-to-line RMS) and Hz.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{GfmError, Result};
use crate::plant::{per_unit_convert, Base, ConverterParams, Disturbance, SiParams, Setpoints};
use crate::simkit::{Event, Quantity, Scenario, DEFAULT_DT, DEFAULT_SAMPLE_PERIOD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    Si,
    Pu,
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| GfmError::Io { path: path.display().to_string(), source })
}

fn parse<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| GfmError::Parse(e.to_string()))
}

fn to_toml<T: Serialize>(v: &T) -> Result<String> {
    toml::to_string(v).map_err(|e| GfmError::Parse(e.to_string()))
}

#[derive(Deserialize)]
struct UnitsTag {
    units: Units,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SiParamsDoc {
    units: Units,
    base: Base,
    values: SiParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    include_rf: Option<bool>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PuParamsDoc {
    units: Units,
    values: ConverterParams,
}

/// Parses and validates a parameter document.
pub fn params_from_toml(text: &str) -> Result<ConverterParams> {
    let p = match parse::<UnitsTag>(text)?.units {
        Units::Si => {
            let doc: SiParamsDoc = parse(text)?;
            let mut p = per_unit_convert(&doc.values, &doc.base)?;
            if let Some(rf) = doc.include_rf {
                p.include_rf = rf;
            }
            p
        }
        Units::Pu => parse::<PuParamsDoc>(text)?.values,
    };
    p.validate()?;
    Ok(p)
}

/// Per-unit document for `p`.
pub fn params_to_toml(p: &ConverterParams) -> Result<String> {
    to_toml(&PuParamsDoc { units: Units::Pu, values: *p })
}

/// SI document for `p`.
pub fn params_to_si_toml(p: &ConverterParams) -> Result<String> {
    to_toml(&SiParamsDoc { units: Units::Si, base: p.base, values: p.to_si(), include_rf: Some(p.include_rf) })
}

pub fn load_params(path: &Path) -> Result<ConverterParams> {
    params_from_toml(&read_text(path)?)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    units: Units,
    name: String,
    duration: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sample_period: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    setpoints: Option<Setpoints>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    disturbance: Option<Disturbance>,
    #[serde(default)]
    events: Vec<Event>,
}

fn si_scale(q: Quantity, p: &ConverterParams) -> f64 {
    match q {
        Quantity::Pref | Quantity::Qref => p.base.sn,
        Quantity::Vref | Quantity::Vg => p.base.vn,
        Quantity::Vdcref => p.base.vdc_base,
        Quantity::OmegaG => p.omega_b / (2.0 * std::f64::consts::PI),
    }
}

/// Parses and validates a scenario document. `p` supplies the bases for
/// SI event values.
pub fn scenario_from_toml(text: &str, p: &ConverterParams) -> Result<Scenario> {
    let doc: ScenarioDoc = parse(text)?;
    let mut events = doc.events;
    if doc.units == Units::Si {
        for e in &mut events {
            e.value /= si_scale(e.quantity, p);
        }
    }
    let s = Scenario {
        name: doc.name,
        duration: doc.duration,
        dt: doc.dt.unwrap_or(DEFAULT_DT),
        sample_period: doc.sample_period.unwrap_or(DEFAULT_SAMPLE_PERIOD),
        setpoints: doc.setpoints.unwrap_or_default(),
        disturbance: doc.disturbance.unwrap_or_default(),
        events,
    };
    s.validate()?;
    Ok(s)
}

/// Per-unit document for `s`.
pub fn scenario_to_toml(s: &Scenario) -> Result<String> {
    to_toml(&ScenarioDoc {
        units: Units::Pu,
        name: s.name.clone(),
        duration: s.duration,
        dt: Some(s.dt),
        sample_period: Some(s.sample_period),
        setpoints: Some(s.setpoints),
        disturbance: Some(s.disturbance),
        events: s.events.clone(),
    })
}

pub fn load_scenario(path: &Path, p: &ConverterParams) -> Result<Scenario> {
    scenario_from_toml(&read_text(path)?, p)
}
