//! Per-unit converter–grid model in the `dq` frame defined by the converter
//! frequency `ωu`, with DC-link dynamics fed by a controlled current source.
//!
//! State `x = [id iq vd vq iod ioq δ vdc]`, control `u = [iu ωu Eu]`,
//! outputs `y = [vdc p ωu q V]`, disturbance `d = [ωg Vg]`.

mod equilibrium;
mod linearize;
mod model;

use serde::{Deserialize, Serialize};

use crate::error::{GfmError, Result};

pub use equilibrium::{solve_equilibrium, Equilibrium};
pub use linearize::{linearize, PLANT_INPUTS, PLANT_OUTPUTS};
pub use model::{f_dynamics, g_outputs, VDC_MIN};

/// Base quantities for per-unit conversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Base {
    /// Nominal apparent power, W.
    pub sn: f64,
    /// Nominal line-to-line RMS voltage, V.
    pub vn: f64,
    /// DC voltage base, V.
    pub vdc_base: f64,
}

impl Base {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("Sn", self.sn), ("Vn", self.vn), ("Vdc_base", self.vdc_base)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(GfmError::Domain(format!("base {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// AC impedance base `Vn² / Sn`.
    pub fn z_ac(&self) -> f64 {
        self.vn * self.vn / self.sn
    }

    /// DC impedance base `Vdc_base² / Sn`.
    pub fn z_dc(&self) -> f64 {
        self.vdc_base * self.vdc_base / self.sn
    }
}

impl Default for Base {
    fn default() -> Self {
        Self { sn: 4000.0, vn: 380.0, vdc_base: 700.0 }
    }
}

/// Physical component values in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiParams {
    /// Nominal angular frequency, rad/s.
    pub omega_n: f64,
    pub lf: f64,
    pub cf: f64,
    pub lg: f64,
    pub rg: f64,
    pub rf: f64,
    pub cdc: f64,
    /// Droop coefficients are dimensionless and carried through unchanged.
    pub dp: f64,
    pub dq: f64,
    /// Grid voltage magnitude, p.u.
    pub vg: f64,
}

impl SiParams {
    /// Component values of the reference converter: 4 kW, 380 V, 50 Hz.
    pub fn reference() -> Self {
        Self {
            omega_n: 100.0 * std::f64::consts::PI,
            lf: 2e-3,
            cf: 20e-6,
            lg: 2e-3,
            rg: 0.06,
            rf: 0.06,
            cdc: 500e-6,
            dp: 0.01,
            dq: 0.05,
            vg: 1.0,
        }
    }
}

/// Per-unit plant and droop parameters. Capacitances are stored as per-unit
/// susceptances `ωn·C·Zb`, inductances as per-unit reactances `ωn·L/Zb`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConverterParams {
    pub omega_b: f64,
    pub lf: f64,
    pub cf: f64,
    pub lg: f64,
    pub cdc: f64,
    pub rg: f64,
    pub rf: f64,
    pub dp: f64,
    pub dq: f64,
    pub vg: f64,
    pub base: Base,
    /// Adds the filter resistance to the inductor-current equations.
    #[serde(default = "default_include_rf")]
    pub include_rf: bool,
}

fn default_include_rf() -> bool {
    true
}

impl ConverterParams {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        for (name, v) in [
            ("omega_b", self.omega_b),
            ("Lf", self.lf),
            ("Cf", self.cf),
            ("Lg", self.lg),
            ("Cdc", self.cdc),
            ("Rg", self.rg),
            ("Vg", self.vg),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(GfmError::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.rf >= 0.0 && self.rf.is_finite()) {
            return Err(GfmError::Domain(format!("Rf must be non-negative, got {}", self.rf)));
        }
        for (name, v) in [("Dp", self.dp), ("Dq", self.dq)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(GfmError::Domain(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        Ok(())
    }

    /// Filter resistance used by the dynamics (zero unless `include_rf`).
    pub fn effective_rf(&self) -> f64 {
        if self.include_rf {
            self.rf
        } else {
            0.0
        }
    }

    /// Inverse of [`per_unit_convert`].
    pub fn to_si(&self) -> SiParams {
        let zb = self.base.z_ac();
        let w = self.omega_b;
        SiParams {
            omega_n: w,
            lf: self.lf * zb / w,
            cf: self.cf / (w * zb),
            lg: self.lg * zb / w,
            rg: self.rg * zb,
            rf: self.rf * zb,
            cdc: self.cdc / (w * self.base.z_dc()),
            dp: self.dp,
            dq: self.dq,
            vg: self.vg,
        }
    }
}

impl Default for ConverterParams {
    /// The reference 4 kW converter in per unit.
    fn default() -> Self {
        per_unit_convert(&SiParams::reference(), &Base::default()).expect("reference parameters are valid")
    }
}

/// Normalizes SI component values on `base`.
pub fn per_unit_convert(si: &SiParams, base: &Base) -> Result<ConverterParams> {
    base.validate()?;
    if !(si.omega_n > 0.0) {
        return Err(GfmError::Domain(format!("nominal frequency must be positive, got {}", si.omega_n)));
    }
    let zb = base.z_ac();
    let w = si.omega_n;
    let p = ConverterParams {
        omega_b: w,
        lf: w * si.lf / zb,
        cf: w * si.cf * zb,
        lg: w * si.lg / zb,
        cdc: w * si.cdc * base.z_dc(),
        rg: si.rg / zb,
        rf: si.rf / zb,
        dp: si.dp,
        dq: si.dq,
        vg: si.vg,
        base: *base,
        include_rf: true,
    };
    Ok(p)
}

/// Plant state `[id iq vd vq iod ioq δ vdc]` in p.u. (δ in rad).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlantState {
    pub id: f64,
    pub iq: f64,
    pub vd: f64,
    pub vq: f64,
    pub iod: f64,
    pub ioq: f64,
    pub delta: f64,
    pub vdc: f64,
}

impl PlantState {
    pub const NAMES: [&'static str; 8] = ["id", "iq", "vd", "vq", "iod", "ioq", "delta", "vdc"];

    pub fn to_array(&self) -> [f64; 8] {
        [self.id, self.iq, self.vd, self.vq, self.iod, self.ioq, self.delta, self.vdc]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self { id: v[0], iq: v[1], vd: v[2], vq: v[3], iod: v[4], ioq: v[5], delta: v[6], vdc: v[7] }
    }

    /// Same state with `δ` wrapped into `(−π, π]`.
    pub fn wrapped(mut self) -> Self {
        self.delta = wrap_angle(self.delta);
        self
    }
}

pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Control input `u = [iu ωu Eu]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub iu: f64,
    pub omega_u: f64,
    pub eu: f64,
}

impl ControlInput {
    pub fn to_array(&self) -> [f64; 3] {
        [self.iu, self.omega_u, self.eu]
    }
    pub fn from_slice(v: &[f64]) -> Self {
        Self { iu: v[0], omega_u: v[1], eu: v[2] }
    }
}

/// Output `y = [vdc p ωu q V]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OutputVector {
    pub vdc: f64,
    pub p: f64,
    pub omega_u: f64,
    pub q: f64,
    pub v: f64,
}

impl OutputVector {
    pub const NAMES: [&'static str; 5] = ["vdc", "p", "omega_u", "q", "V"];

    pub fn to_array(&self) -> [f64; 5] {
        [self.vdc, self.p, self.omega_u, self.q, self.v]
    }
}

/// Grid disturbance `d = [ωg Vg]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disturbance {
    pub omega_g: f64,
    pub vg: f64,
}

impl Default for Disturbance {
    fn default() -> Self {
        Self { omega_g: 1.0, vg: 1.0 }
    }
}

/// Set-points `u0` for the control input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputSetpoints {
    pub i0: f64,
    pub omega_0: f64,
    pub e0: f64,
}

/// References `Yref` for the outputs; the frequency reference tracks the
/// grid frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct References {
    pub vdc_ref: f64,
    pub p_ref: f64,
    pub omega_g_ref: f64,
    pub q_ref: f64,
    pub v_ref: f64,
}

impl References {
    pub fn to_array(&self) -> [f64; 5] {
        [self.vdc_ref, self.p_ref, self.omega_g_ref, self.q_ref, self.v_ref]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Setpoints {
    pub u0: InputSetpoints,
    pub yref: References,
}

impl Default for Setpoints {
    /// Nominal operating point: 0.5 p.u. active power, unity voltage, no
    /// reactive power, DC link at its base voltage.
    fn default() -> Self {
        Self {
            u0: InputSetpoints { i0: 0.5, omega_0: 1.0, e0: 1.0 },
            yref: References { vdc_ref: 1.0, p_ref: 0.5, omega_g_ref: 1.0, q_ref: 0.0, v_ref: 1.0 },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reference_bases() {
        let base = Base::default();
        assert!((base.z_ac() - 36.1).abs() < 1e-12);
        let p = ConverterParams::default();
        let lg = 100.0 * std::f64::consts::PI * 0.002 / 36.1;
        assert!((p.lg - lg).abs() < 1e-15);
        assert!((p.lg - 0.0174).abs() < 1e-4);
        assert!(p.validate().is_ok());
        assert!((p.effective_rf() - 0.06 / 36.1).abs() < 1e-15);
    }

    #[test]
    fn unit_base_passes_through() {
        let si = SiParams { omega_n: 1.0, lf: 0.1, cf: 0.2, lg: 0.3, rg: 0.01, rf: 0.02, cdc: 5.0, dp: 0.01, dq: 0.05, vg: 1.0 };
        let base = Base { sn: 1.0, vn: 1.0, vdc_base: 1.0 };
        let p = per_unit_convert(&si, &base).unwrap();
        assert_eq!((p.lf, p.cf, p.lg, p.rg, p.rf, p.cdc), (0.1, 0.2, 0.3, 0.01, 0.02, 5.0));
    }

    #[test]
    fn invalid_bases_and_params() {
        let bad = Base { sn: 0.0, ..Base::default() };
        assert!(matches!(per_unit_convert(&SiParams::reference(), &bad), Err(GfmError::Domain(_))));
        let mut p = ConverterParams::default();
        p.dp = 1.5;
        assert!(p.validate().is_err());
        p.dp = 0.01;
        p.rf = -1.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn wrap_angle_principal_branch() {
        use std::f64::consts::PI;
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(0.3) - 0.3).abs() < 1e-15);
        assert!((wrap_angle(-0.3 - 2.0 * PI) + 0.3).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn per_unit_round_trip(
            lf in 1e-4f64..1e-2, cf in 1e-6f64..1e-4, lg in 1e-4f64..1e-2,
            rg in 1e-3f64..1.0, rf in 0.0f64..1.0, cdc in 1e-4f64..1e-2,
            sn in 1e3f64..1e6, vn in 100.0f64..1e4, vdc in 100.0f64..2e3,
        ) {
            let si = SiParams { lf, cf, lg, rg, rf, cdc, ..SiParams::reference() };
            let base = Base { sn, vn, vdc_base: vdc };
            let back = per_unit_convert(&si, &base).unwrap().to_si();
            for (a, b) in [(si.lf, back.lf), (si.cf, back.cf), (si.lg, back.lg), (si.rg, back.rg), (si.rf, back.rf), (si.cdc, back.cdc)] {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300));
            }
        }
    }
}
