use super::{ControlInput, ConverterParams, Disturbance, OutputVector, PlantState};
use crate::error::{GfmError, Result};

/// Smallest DC voltage for which the DC-link equation is evaluated.
pub const VDC_MIN: f64 = 1e-6;

/// State derivative of the converter–grid model.
pub fn f_dynamics(x: &PlantState, u: &ControlInput, d: &Disturbance, p: &ConverterParams) -> Result<PlantState> {
    if !(x.vdc > VDC_MIN) {
        return Err(GfmError::Singularity { vdc: x.vdc });
    }
    let wb = p.omega_b;
    let rf = p.effective_rf();
    let (sin_d, cos_d) = x.delta.sin_cos();
    let w = u.omega_u;
    Ok(PlantState {
        id: wb / p.lf * u.eu - wb / p.lf * x.vd + wb * w * x.iq - wb * rf / p.lf * x.id,
        iq: -wb / p.lf * x.vq - wb * w * x.id - wb * rf / p.lf * x.iq,
        vd: wb / p.cf * x.id - wb / p.cf * x.iod + wb * w * x.vq,
        vq: wb / p.cf * x.iq - wb / p.cf * x.ioq - wb * w * x.vd,
        iod: wb / p.lg * x.vd - wb / p.lg * d.vg * cos_d - wb * p.rg / p.lg * x.iod + wb * w * x.ioq,
        ioq: wb / p.lg * x.vq + wb / p.lg * d.vg * sin_d - wb * p.rg / p.lg * x.ioq - wb * w * x.iod,
        delta: wb * w - wb * d.omega_g,
        vdc: wb / p.cdc * u.iu - wb * u.eu * x.id / (p.cdc * x.vdc),
    })
}

/// Measured outputs `[vdc p ωu q V]`.
pub fn g_outputs(x: &PlantState, u: &ControlInput) -> OutputVector {
    OutputVector {
        vdc: x.vdc,
        p: x.vd * x.iod + x.vq * x.ioq,
        omega_u: u.omega_u,
        q: -x.vd * x.ioq + x.vq * x.iod,
        v: x.vd.hypot(x.vq),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_state_substitution() {
        let p = ConverterParams::default();
        let x = PlantState { vdc: 1.0, ..Default::default() };
        let u = ControlInput::default();
        let d = Disturbance { omega_g: 1.0, vg: 1.0 };
        let dx = f_dynamics(&x, &u, &d, &p).unwrap();
        assert!((dx.iod - (-p.omega_b / p.lg)).abs() < 1e-9);
        assert_eq!(dx.ioq, 0.0);
        assert_eq!(dx.delta, -p.omega_b);
    }

    #[test]
    fn synchronized_angle_is_constant() {
        let p = ConverterParams::default();
        let x = PlantState { vdc: 1.0, delta: 0.2, ..Default::default() };
        let u = ControlInput { iu: 0.0, omega_u: 0.998, eu: 1.0 };
        let d = Disturbance { omega_g: 0.998, vg: 1.0 };
        assert_eq!(f_dynamics(&x, &u, &d, &p).unwrap().delta, 0.0);
    }

    #[test]
    fn dc_singularity() {
        let p = ConverterParams::default();
        let x = PlantState { vdc: 1e-7, ..Default::default() };
        let r = f_dynamics(&x, &ControlInput::default(), &Disturbance::default(), &p);
        assert!(matches!(r, Err(GfmError::Singularity { .. })));
    }

    #[test]
    fn filter_resistance_switch() {
        let mut p = ConverterParams { include_rf: false, ..ConverterParams::default() };
        let x = PlantState { id: 0.5, iq: -0.2, vdc: 1.0, ..Default::default() };
        let u = ControlInput::default();
        let d = Disturbance::default();
        let without = f_dynamics(&x, &u, &d, &p).unwrap();
        p.include_rf = true;
        let with = f_dynamics(&x, &u, &d, &p).unwrap();
        let expect = -p.omega_b * p.rf / p.lf * 0.5;
        assert!((with.id - without.id - expect).abs() < 1e-9);
    }

    #[test]
    fn output_substitutions() {
        let u = ControlInput { iu: 0.0, omega_u: 1.0, eu: 1.0 };
        let x = PlantState { vd: 1.0, iod: 0.5, vdc: 1.0, ..Default::default() };
        let y = g_outputs(&x, &u);
        assert_eq!((y.p, y.q, y.v), (0.5, 0.0, 1.0));
        let x = PlantState { vd: 0.8, vq: 0.6, ..Default::default() };
        assert!((g_outputs(&x, &u).v - 1.0).abs() < 1e-15);
        let x = PlantState { vd: 1.0, ioq: 0.2, ..Default::default() };
        assert!((g_outputs(&x, &u).q + 0.2).abs() < 1e-15);
        assert_eq!(g_outputs(&x, &u).omega_u, 1.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn voltage_magnitude(vd in -2.0f64..2.0, vq in -2.0f64..2.0, vdc in 0.5f64..1.5) {
            let x = PlantState { vd, vq, vdc, ..Default::default() };
            let y = g_outputs(&x, &ControlInput::default());
            prop_assert!((y.v - (vd * vd + vq * vq).sqrt()).abs() <= 1e-15 * y.v.max(1.0));
            prop_assert!(y.v >= 0.0);
        }
    }
}
