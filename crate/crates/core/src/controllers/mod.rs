//! Control transfer matrix `Φ` (3×5): element grid, preset controllers,
//! structured gain vector and state-space realization.
//!
//! Rows generate `[iu ωu Eu]`, columns read the errors on `[vdc p ωu q V]`.

mod element;
mod format;
mod realize;

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{GfmError, Result};
use crate::plant::ConverterParams;

pub use element::{make_element, Element, ElementKind, ElementParams, Factor, DERIVATIVE_BANDLIMIT};
pub use format::ControllerDoc;
pub use realize::{realize_phi, ControllerRealization, CTRL_OUTPUTS, MEAS_INPUTS, REF_INPUTS};

/// Named gains handed to [`preset`].
pub type Tuning = BTreeMap<String, f64>;

pub const PRESETS: [&str; 6] = ["droop-1", "droop-5", "psc-1", "vsg-2", "matching-1", "mimo-gfm"];

/// Grid of elements `φij` with the droop coefficients used by tied entries.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiSpec {
    pub grid: [[Element; 5]; 3],
    pub dp: f64,
    pub dq: f64,
}

impl PhiSpec {
    pub fn zero(dp: f64, dq: f64) -> Self {
        Self { grid: Default::default(), dp, dq }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("Dp", self.dp), ("Dq", self.dq)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(GfmError::Domain(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if !self.grid[1][2].is_strictly_proper() {
            return Err(GfmError::Element(
                "phi23 must be strictly proper or zero (omega_u self-loop)".into(),
            ));
        }
        Ok(())
    }

    /// `φij(s)` on the reference path (0-based indices).
    pub fn eval(&self, i: usize, j: usize, s: Complex64) -> Complex64 {
        self.grid[i][j].eval(s)
    }

    pub fn set(&mut self, i: usize, j: usize, el: Element) -> &mut Self {
        self.grid[i][j] = el;
        self
    }
}

/// Free gains of the MIMO-GFM structure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainVector {
    pub kpdc: f64,
    pub kidc: f64,
    pub k21: f64,
    pub k31: f64,
    pub k12: f64,
    pub k22: f64,
    pub k32: f64,
    pub k14: f64,
    pub k15: f64,
    pub k24: f64,
    pub k34: f64,
}

impl GainVector {
    pub const NAMES: [&'static str; 11] =
        ["kpdc", "kidc", "k21", "k31", "k12", "k22", "k32", "k14", "k15", "k24", "k34"];

    /// Starting point `diag(90, 400, 0, 0, 0, 20, 0, 0, 0, 0, 0, 1, 1)`.
    pub fn initial() -> Self {
        Self::from_diag(&[90.0, 400.0, 0.0, 0.0, 0.0, 20.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0]).unwrap()
    }

    /// Published optimized design.
    pub fn reference_optimum() -> Self {
        Self {
            kpdc: 120.224,
            kidc: 265.6217,
            k21: -0.8382,
            k31: -4.8977,
            k12: -0.0019,
            k22: 1.7622,
            k32: 0.0,
            k14: 0.1673,
            k15: -0.8274,
            k24: 0.0,
            k34: 1.0844,
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.kpdc, self.kidc, self.k21, self.k31, self.k12, self.k22, self.k32, self.k14, self.k15, self.k24,
            self.k34,
        ]
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != 11 {
            return Err(GfmError::Dimension(format!("gain vector needs 11 values, got {}", v.len())));
        }
        Ok(Self {
            kpdc: v[0],
            kidc: v[1],
            k21: v[2],
            k31: v[3],
            k12: v[4],
            k22: v[5],
            k32: v[6],
            k14: v[7],
            k15: v[8],
            k24: v[9],
            k34: v[10],
        })
    }

    /// The 13 diagonal slots, `k24` and `k34` repeated.
    pub fn to_diag(&self) -> [f64; 13] {
        [
            self.kpdc, self.kidc, self.k21, self.k31, self.k12, self.k22, self.k32, self.k14, self.k15, self.k24,
            self.k24, self.k34, self.k34,
        ]
    }

    pub fn from_diag(d: &[f64]) -> Result<Self> {
        if d.len() != 13 {
            return Err(GfmError::Dimension(format!("diagonal needs 13 slots, got {}", d.len())));
        }
        if d[9] != d[10] || d[11] != d[12] {
            return Err(GfmError::Domain("tied slots (k24, k34) must be equal".into()));
        }
        Self::from_slice(&[d[0], d[1], d[2], d[3], d[4], d[5], d[6], d[7], d[8], d[9], d[11]])
    }

    pub fn validate(&self) -> Result<()> {
        if self.to_vec().iter().any(|v| !v.is_finite()) {
            return Err(GfmError::NonFinite("gain vector".into()));
        }
        if !(self.k22 > 0.0) {
            return Err(GfmError::Domain(format!("k22 must be positive, got {}", self.k22)));
        }
        if self.kidc < 0.0 {
            return Err(GfmError::Domain(format!("kidc must be non-negative, got {}", self.kidc)));
        }
        Ok(())
    }

    pub fn to_tuning(&self) -> Tuning {
        Self::NAMES.iter().zip(self.to_vec()).map(|(n, v)| (n.to_string(), v)).collect()
    }

    pub fn from_tuning(t: &Tuning) -> Result<Self> {
        let v = Self::NAMES
            .iter()
            .map(|n| t.get(*n).copied().ok_or_else(|| GfmError::MissingTuning(n.to_string())))
            .collect::<Result<Vec<_>>>()?;
        Self::from_slice(&v)
    }
}

fn gain_or_zero(k: f64) -> Element {
    if k == 0.0 {
        Element::zero()
    } else {
        Element::gain(k)
    }
}

fn integral_or_zero(ki: f64) -> Element {
    if ki == 0.0 {
        Element::zero()
    } else {
        Element::integral(ki)
    }
}

/// MIMO-GFM structure for the gain vector `k`.
pub fn gains_to_phi(k: &GainVector, p: &ConverterParams) -> Result<PhiSpec> {
    k.validate()?;
    let (dp, dq) = (p.dp, p.dq);
    let mut phi = PhiSpec::zero(dp, dq);
    phi.grid[0] = [
        Element::pi(k.kpdc, k.kidc),
        gain_or_zero(k.k12),
        Element::zero(),
        gain_or_zero(k.k14),
        gain_or_zero(k.k15),
    ];
    phi.grid[1] = [
        gain_or_zero(k.k21),
        // Dp·k22/(s+k22)
        Element::inertia(dp, 1.0 / k.k22)?,
        Element::zero(),
        gain_or_zero(k.k24),
        gain_or_zero(k.k24 / dq),
    ];
    phi.grid[2] = [
        gain_or_zero(k.k31),
        gain_or_zero(k.k32),
        Element::zero(),
        integral_or_zero(k.k34),
        integral_or_zero(k.k34 / dq),
    ];
    phi.validate()?;
    Ok(phi)
}

/// Default gains for a preset; VSG-2 and droop-5 share the inertia and the
/// voltage loop of the published sparse design.
pub fn default_tuning(name: &str, p: &ConverterParams) -> Result<Tuning> {
    // φ22 = 0.059801/(s + 5.9801) → 1/(2H) = 5.9801·Dp/Dp
    let h = 1.0 / (2.0 * p.dp * 5.9801);
    let pairs: Vec<(&str, f64)> = match name {
        "droop-1" | "psc-1" => vec![("kpdc", 90.0), ("kidc", 400.0)],
        "droop-5" => vec![("kpdc", 90.0), ("kidc", 400.0), ("h", h), ("kq", 1.9048)],
        "vsg-2" => vec![("kpdc", 90.0), ("kidc", 400.0), ("h", h), ("kq", 1.9048), ("kp", 0.0)],
        "matching-1" => vec![("ki", 300.0), ("kdc", -100.0 * p.dp), ("kpv", 0.1), ("kiv", 20.0)],
        "mimo-gfm" => return Ok(GainVector::reference_optimum().to_tuning()),
        other => return Err(GfmError::UnknownPreset(other.to_string())),
    };
    Ok(pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
}

fn required(t: &Tuning, key: &str) -> Result<f64> {
    let v = t.get(key).copied().ok_or_else(|| GfmError::MissingTuning(key.to_string()))?;
    if !v.is_finite() {
        return Err(GfmError::NonFinite(format!("tuning {key}")));
    }
    Ok(v)
}

/// Preset controller `name` built from `tuning`.
///
/// | preset     | keys                          |
/// |------------|-------------------------------|
/// | droop-1    | kpdc kidc                     |
/// | psc-1      | kpdc kidc                     |
/// | droop-5    | kpdc kidc h [kq]              |
/// | vsg-2      | kpdc kidc h kq [kp]           |
/// | matching-1 | ki kdc kpv kiv                |
/// | mimo-gfm   | the eleven [`GainVector`] keys |
pub fn preset(name: &str, p: &ConverterParams, tuning: &Tuning) -> Result<PhiSpec> {
    let (dp, dq) = (p.dp, p.dq);
    let mut phi = PhiSpec::zero(dp, dq);
    match name {
        "droop-1" | "psc-1" => {
            phi.grid[0][0] = Element::pi(required(tuning, "kpdc")?, required(tuning, "kidc")?);
            phi.grid[1][1] = Element::gain(dp);
            phi.grid[2][3] = Element::gain(dq);
        }
        "droop-5" => {
            phi.grid[0][0] = Element::pi(required(tuning, "kpdc")?, required(tuning, "kidc")?);
            let tau = 2.0 * required(tuning, "h")? * dp;
            phi.grid[1][1] = Element::gain(dp).with_feedback_only(Element::inertia(1.0, tau)?);
            // kq > 0 takes the VSG-2 voltage loop, otherwise plain q-V droop
            match tuning.get("kq").copied().unwrap_or(0.0) {
                kq if kq != 0.0 => {
                    phi.grid[2][3] = Element::integral(kq);
                    phi.grid[2][4] = Element::integral(kq / dq);
                }
                _ => phi.grid[2][3] = Element::gain(dq),
            }
        }
        "vsg-2" => {
            phi.grid[0][0] = Element::pi(required(tuning, "kpdc")?, required(tuning, "kidc")?);
            let tau = 2.0 * required(tuning, "h")? * dp;
            // 1/(2Hs + 1/Dp) = Dp/(2H·Dp·s + 1)
            phi.grid[1][1] = Element::inertia(dp, tau)?;
            let kp = tuning.get("kp").copied().unwrap_or(0.0);
            if kp != 0.0 {
                phi.grid[1][2] = Element::inertia(kp * dp, tau)?;
            }
            let kq = required(tuning, "kq")?;
            phi.grid[2][3] = Element::integral(kq);
            phi.grid[2][4] = Element::integral(kq / dq);
        }
        "matching-1" => {
            phi.grid[0][0] = Element::gain(required(tuning, "ki")?);
            phi.grid[1][0] = Element::gain(required(tuning, "kdc")?);
            phi.grid[2][4] = Element::pi(required(tuning, "kpv")?, required(tuning, "kiv")?);
        }
        "mimo-gfm" => return gains_to_phi(&GainVector::from_tuning(tuning)?, p),
        other => return Err(GfmError::UnknownPreset(other.to_string())),
    }
    phi.validate()?;
    Ok(phi)
}

/// Preset with its default gains, individual entries overridden by `overrides`.
pub fn preset_with_defaults(name: &str, p: &ConverterParams, overrides: &Tuning) -> Result<PhiSpec> {
    let mut t = default_tuning(name, p)?;
    t.extend(overrides.iter().map(|(k, v)| (k.clone(), *v)));
    preset(name, p, &t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn jw(w: f64) -> Complex64 {
        Complex64::new(0.0, w)
    }

    fn params() -> ConverterParams {
        ConverterParams::default()
    }

    #[test]
    fn droop_structure() {
        let phi = preset_with_defaults("droop-1", &params(), &Tuning::new()).unwrap();
        assert_eq!(phi.grid[0][0].factors[0].kind(), ElementKind::PI);
        assert_eq!(phi.grid[1][1].factors, vec![Factor::P { k: 0.01 }]);
        assert_eq!(phi.grid[2][3].factors, vec![Factor::P { k: params().dq }]);
        let nonzero = phi.grid.iter().flatten().filter(|e| !e.is_zero()).count();
        assert_eq!(nonzero, 3);
    }

    #[test]
    fn vsg_inertia_dc_gain() {
        let p = params();
        let phi = preset_with_defaults("vsg-2", &p, &Tuning::new()).unwrap();
        assert!((phi.grid[1][1].dc_gain() - p.dp).abs() < 1e-15);
        // 1/(2Hs + 1/Dp) at a test frequency
        let h = default_tuning("vsg-2", &p).unwrap()["h"];
        let s = jw(3.0);
        let want = 1.0 / (2.0 * h * s + 1.0 / p.dp);
        assert!((phi.eval(1, 1, s) - want).norm() < 1e-15);
        // published sparse design: 0.059801/(s + 5.9801)
        let printed = 0.059801 / (s + 5.9801);
        assert!((phi.eval(1, 1, s) - printed).norm() < 1e-12);
    }

    #[test]
    fn matching_structure() {
        let phi = preset_with_defaults("matching-1", &params(), &Tuning::new()).unwrap();
        assert_eq!(phi.grid[0][0].factors[0].kind(), ElementKind::P);
        assert_eq!(phi.grid[1][0].factors[0].kind(), ElementKind::P);
        for i in 0..3 {
            for j in 1..4 {
                assert!(phi.grid[i][j].is_zero(), "phi{}{}", i + 1, j + 1);
            }
        }
        assert!(phi.grid[2][4].has_integrator());
    }

    #[test]
    fn preset_errors() {
        assert!(matches!(preset("vsg-99", &params(), &Tuning::new()), Err(GfmError::UnknownPreset(_))));
        let mut t = Tuning::new();
        t.insert("kpdc".into(), 90.0);
        assert!(matches!(preset("droop-1", &params(), &t), Err(GfmError::MissingTuning(k)) if k == "kidc"));
    }

    #[test]
    fn published_gains_structure() {
        let phi = gains_to_phi(&GainVector::reference_optimum(), &params()).unwrap();
        assert_eq!(phi.grid[0][0].factors, vec![Factor::PI { kp: 120.224, ki: 265.6217 }]);
        let s = jw(2.0);
        assert!((phi.eval(0, 0, s) - (120.224 + 265.6217 / s)).norm() < 1e-12);
        // φ22 = 0.017622/(s+1.7622), φ35 = 21.6872/s
        assert!((phi.eval(1, 1, s) - 0.017622 / (s + 1.7622)).norm() < 1e-12);
        assert!((phi.eval(2, 4, s) - 21.688 / s).norm() < 1e-3);
        for i in 0..3 {
            assert!(phi.grid[i][2].is_zero());
        }
    }

    #[test]
    fn initial_gains() {
        let k = GainVector::initial();
        assert_eq!((k.kpdc, k.kidc, k.k22, k.k34), (90.0, 400.0, 20.0, 1.0));
        assert_eq!(k.to_diag()[11], 1.0);
        assert!(GainVector::from_diag(&[0.0; 12]).is_err());
        let mut bad = k.to_diag();
        bad[10] = 3.0;
        assert!(GainVector::from_diag(&bad).is_err());
    }

    #[test]
    fn k22_must_be_positive() {
        let mut k = GainVector::initial();
        k.k22 = 0.0;
        assert!(gains_to_phi(&k, &params()).is_err());
        k.k22 = -1.0;
        assert!(gains_to_phi(&k, &params()).is_err());
    }

    #[test]
    fn droop5_feedback_filter() {
        let p = params();
        let phi = preset_with_defaults("droop-5", &p, &Tuning::new()).unwrap();
        let vsg = preset_with_defaults("vsg-2", &p, &Tuning::new()).unwrap();
        for w in [0.1, 1.0, 6.0, 40.0] {
            let s = jw(w);
            assert!((phi.grid[1][1].eval_feedback(s) - vsg.grid[1][1].eval_feedback(s)).norm() < 1e-15);
            assert_eq!(phi.grid[1][1].eval(s), Complex64::new(p.dp, 0.0));
        }
        assert_eq!(phi.grid[0], vsg.grid[0]);
        assert_eq!(phi.grid[2], vsg.grid[2]);
        let mut t = Tuning::new();
        t.insert("kq".into(), 0.0);
        let plain = preset_with_defaults("droop-5", &p, &t).unwrap();
        assert_eq!(plain.grid[2][3], Element::gain(p.dq));
        assert!(plain.grid[2][4].is_zero());
    }

    proptest! {
        #[test]
        fn tied_entries(v in proptest::collection::vec(-10.0f64..10.0, 11), k22 in 0.01f64..100.0, kidc in 0.0f64..500.0, w in 1e-3f64..1e4) {
            let mut k = GainVector::from_slice(&v).unwrap();
            k.k22 = k22;
            k.kidc = kidc;
            let p = params();
            let phi = gains_to_phi(&k, &p).unwrap();
            let s = jw(w);
            prop_assert!((phi.eval(1, 4, s) * p.dq - phi.eval(1, 3, s)).norm() <= 1e-12 * phi.eval(1, 3, s).norm().max(1e-300));
            prop_assert!((phi.eval(2, 4, s) * p.dq - phi.eval(2, 3, s)).norm() <= 1e-12 * phi.eval(2, 3, s).norm().max(1e-300));
            prop_assert_eq!(phi.grid[1][1].dc_gain(), p.dp);
            prop_assert_eq!(GainVector::from_diag(&k.to_diag()).unwrap(), k);
        }
    }
}
