use serde::{Deserialize, Serialize};

use crate::error::{GfmError, Result};
use crate::plant::{Disturbance, Setpoints};

/// Quantity changed by a scenario event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quantity {
    Pref,
    Qref,
    Vref,
    Vdcref,
    /// Grid frequency; its reference follows.
    #[serde(rename = "omega_g")]
    OmegaG,
    Vg,
}

impl Quantity {
    pub fn name(&self) -> &'static str {
        match self {
            Quantity::Pref => "Pref",
            Quantity::Qref => "Qref",
            Quantity::Vref => "Vref",
            Quantity::Vdcref => "Vdcref",
            Quantity::OmegaG => "omega_g",
            Quantity::Vg => "Vg",
        }
    }

    pub(crate) fn apply(&self, value: f64, sp: &mut Setpoints, d: &mut Disturbance) {
        match self {
            Quantity::Pref => sp.yref.p_ref = value,
            Quantity::Qref => sp.yref.q_ref = value,
            Quantity::Vref => sp.yref.v_ref = value,
            Quantity::Vdcref => sp.yref.vdc_ref = value,
            Quantity::OmegaG => {
                d.omega_g = value;
                sp.yref.omega_g_ref = value;
            }
            Quantity::Vg => d.vg = value,
        }
    }
}

/// Step change of one quantity (value in p.u.).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// Seconds.
    pub t: f64,
    pub quantity: Quantity,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    /// Seconds.
    pub duration: f64,
    /// Integration step, seconds.
    pub dt: f64,
    /// Spacing of the recorded samples, seconds; a multiple of `dt`.
    pub sample_period: f64,
    pub setpoints: Setpoints,
    pub disturbance: Disturbance,
    pub events: Vec<Event>,
}

pub const DEFAULT_DT: f64 = 20e-6;
pub const DEFAULT_SAMPLE_PERIOD: f64 = 1e-4;
pub const SCENARIOS: [&str; 2] = ["pref_step", "wg_step"];

impl Scenario {
    /// Steady run with no events.
    pub fn steady(name: &str, duration: f64) -> Self {
        Self {
            name: name.to_string(),
            duration,
            dt: DEFAULT_DT,
            sample_period: DEFAULT_SAMPLE_PERIOD,
            setpoints: Setpoints::default(),
            disturbance: Disturbance::default(),
            events: Vec::new(),
        }
    }

    /// Active-power reference 0.5 → 1.0 p.u. at 1 s, 5 s long.
    pub fn pref_step() -> Self {
        let mut s = Self::steady("pref_step", 5.0);
        s.events.push(Event { t: 1.0, quantity: Quantity::Pref, value: 1.0 });
        s
    }

    /// Grid frequency 50 → 49.9 Hz at 1 s, 5 s long.
    pub fn wg_step() -> Self {
        let mut s = Self::steady("wg_step", 5.0);
        s.events.push(Event { t: 1.0, quantity: Quantity::OmegaG, value: 0.998 });
        s
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "pref_step" => Ok(Self::pref_step()),
            "wg_step" => Ok(Self::wg_step()),
            other => Err(GfmError::UnknownPreset(other.to_string())),
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(GfmError::Domain(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(GfmError::Domain(format!("duration must be positive, got {}", self.duration)));
        }
        if !(self.sample_period >= self.dt) {
            return Err(GfmError::Domain(format!(
                "sample period {} is shorter than dt {}",
                self.sample_period, self.dt
            )));
        }
        let mut last = 0.0;
        for e in &self.events {
            if !(e.t >= last && e.t <= self.duration) {
                return Err(GfmError::Domain(format!(
                    "event times must be ordered within [0, {}], got {} after {}",
                    self.duration, e.t, last
                )));
            }
            if !e.value.is_finite() {
                return Err(GfmError::NonFinite(format!("event value for {}", e.quantity.name())));
            }
            last = e.t;
        }
        Ok(())
    }

    /// Number of integration steps.
    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    /// Step index of time `t`, snapped to the grid.
    pub(crate) fn snap(&self, t: f64, what: &str) -> usize {
        let k = (t / self.dt).round();
        if (k * self.dt - t).abs() > 1e-9 * self.dt.max(t.abs()) {
            log::warn!("{what} at t = {t} s is off the {} s grid; moved to {} s", self.dt, k * self.dt);
        }
        k as usize
    }

    /// First event time, or 0.
    pub fn first_event_time(&self) -> f64 {
        self.events.first().map_or(0.0, |e| e.t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        let s = Scenario::wg_step();
        s.validate().unwrap();
        assert_eq!(s.steps(), 250_000);
        assert_eq!(s.events[0].quantity, Quantity::OmegaG);
        assert!(Scenario::preset("nope").is_err());
    }

    #[test]
    fn invalid_scenarios() {
        let mut s = Scenario::pref_step();
        s.events.push(Event { t: 0.5, quantity: Quantity::Vg, value: 1.0 });
        assert!(s.validate().is_err());
        assert!(Scenario::pref_step().with_dt(0.0).validate().is_err());
        let mut s = Scenario::pref_step();
        s.events[0].t = 6.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn frequency_event_moves_reference() {
        let mut sp = Setpoints::default();
        let mut d = Disturbance::default();
        Quantity::OmegaG.apply(0.998, &mut sp, &mut d);
        assert_eq!((d.omega_g, sp.yref.omega_g_ref), (0.998, 0.998));
    }
}
