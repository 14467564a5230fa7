//! Operating point of the plant closed by a realized controller.
//!
//! Unknowns are the plant state, the controller state, the control input and
//! any set-point that the controller structure leaves undetermined: `i0`
//! when the DC row has no integral action, `E0` when the voltage row has
//! none. The dispatched set-points are fixed by the steady-state laws
//! (`vdc = Vdcref` or `p = Pref`, and `(Qref−q) + (Vref−V)/Dq = 0`).

use nalgebra::{DMatrix, DVector};

use super::{
    f_dynamics, g_outputs, linearize, wrap_angle, ControlInput, ConverterParams, Disturbance, OutputVector,
    PlantState, Setpoints,
};
use crate::controllers::ControllerRealization;
use crate::error::{GfmError, Result};

const MAX_ITERATIONS: usize = 100;
const TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub x: PlantState,
    pub u: ControlInput,
    /// Controller state.
    pub xi: Vec<f64>,
    pub y: OutputVector,
    /// Set-points with dispatched entries filled in.
    pub setpoints: Setpoints,
    /// Final ∞-norm of the algebraic residual.
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Clone, Copy, PartialEq)]
enum Dispatch {
    /// `i0` free, condition `vdc = Vdcref`.
    I0Vdc,
    /// `i0` free, condition `p = Pref`.
    I0Power,
    /// `E0` free, condition on the q–V law.
    E0Law,
}

struct Problem<'a> {
    p: &'a ConverterParams,
    sp: Setpoints,
    ctrl: &'a ControllerRealization,
    d: Disturbance,
    dispatch: Vec<Dispatch>,
    nc: usize,
}

impl Problem<'_> {
    fn n(&self) -> usize {
        8 + self.nc + 3 + self.dispatch.len()
    }

    fn unpack(&self, z: &DVector<f64>) -> (PlantState, Vec<f64>, ControlInput, Setpoints) {
        let x = PlantState::from_slice(&z.as_slice()[..8]);
        let xi = z.as_slice()[8..8 + self.nc].to_vec();
        let u = ControlInput::from_slice(&z.as_slice()[8 + self.nc..11 + self.nc]);
        let mut sp = self.sp;
        for (k, dsp) in self.dispatch.iter().enumerate() {
            let v = z[11 + self.nc + k];
            match dsp {
                Dispatch::I0Vdc | Dispatch::I0Power => sp.u0.i0 = v,
                Dispatch::E0Law => sp.u0.e0 = v,
            }
        }
        (x, xi, u, sp)
    }

    fn residual(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        let (x, xi, u, sp) = self.unpack(z);
        let m = &self.ctrl.model;
        let fx = f_dynamics(&x, &u, &self.d, self.p)?;
        let y = g_outputs(&x, &u);
        let v = DVector::from_iterator(10, sp.yref.to_array().into_iter().chain(y.to_array()));
        let xi = DVector::from_vec(xi);
        let mut r = DVector::zeros(self.n());
        r.rows_mut(0, 8).copy_from_slice(&fx.to_array());
        let dxi = m.a() * &xi + m.b() * &v;
        r.rows_mut(8, self.nc).copy_from(&dxi);
        let uc = m.c() * &xi + m.d() * &v;
        let u0 = [sp.u0.i0, sp.u0.omega_0, sp.u0.e0];
        for (k, ua) in u.to_array().iter().enumerate() {
            r[8 + self.nc + k] = ua - u0[k] - uc[k];
        }
        for (k, dsp) in self.dispatch.iter().enumerate() {
            r[11 + self.nc + k] = match dsp {
                Dispatch::I0Vdc => y.vdc - sp.yref.vdc_ref,
                Dispatch::I0Power => y.p - sp.yref.p_ref,
                Dispatch::E0Law => (sp.yref.q_ref - y.q) + (sp.yref.v_ref - y.v) / self.p.dq,
            };
        }
        Ok(r)
    }

    fn jacobian(&self, z: &DVector<f64>) -> Result<DMatrix<f64>> {
        let (x, _, u, _) = self.unpack(z);
        let lin = linearize(self.p, &x, &u, &self.d)?;
        let m = &self.ctrl.model;
        let nc = self.nc;
        let (ix, ixi, iu, idsp) = (0, 8, 8 + nc, 11 + nc);
        let mut j = DMatrix::zeros(self.n(), self.n());
        // plant
        j.view_mut((0, ix), (8, 8)).copy_from(lin.a());
        j.view_mut((0, iu), (8, 3)).copy_from(&lin.b().columns(0, 3));
        // dy/dz restricted to x and u
        let dy_dx = lin.c();
        let dy_du = lin.d().columns(0, 3);
        let bm = m.b().columns(5, 5);
        let dm = m.d().columns(5, 5);
        // controller state equation
        j.view_mut((ixi, ixi), (nc, nc)).copy_from(m.a());
        j.view_mut((ixi, ix), (nc, 8)).copy_from(&(&bm * dy_dx));
        j.view_mut((ixi, iu), (nc, 3)).copy_from(&(&bm * dy_du));
        // control law
        j.view_mut((iu, ixi), (3, nc)).copy_from(&(-m.c()));
        j.view_mut((iu, ix), (3, 8)).copy_from(&(-(&dm * dy_dx)));
        let du = DMatrix::identity(3, 3) - &dm * dy_du;
        j.view_mut((iu, iu), (3, 3)).copy_from(&du);
        for (k, dsp) in self.dispatch.iter().enumerate() {
            let row = idsp + k;
            let (ctl_row, out_weights) = match dsp {
                Dispatch::I0Vdc => (0, [1.0, 0.0, 0.0, 0.0, 0.0]),
                Dispatch::I0Power => (0, [0.0, 1.0, 0.0, 0.0, 0.0]),
                Dispatch::E0Law => (2, [0.0, 0.0, 0.0, -1.0, -1.0 / self.p.dq]),
            };
            j[(iu + ctl_row, row)] = -1.0;
            for (o, w) in out_weights.iter().enumerate() {
                if *w == 0.0 {
                    continue;
                }
                for c in 0..8 {
                    j[(row, ix + c)] += w * dy_dx[(o, c)];
                }
                for c in 0..3 {
                    j[(row, iu + c)] += w * dy_du[(o, c)];
                }
            }
        }
        Ok(j)
    }
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Newton solve of the closed-loop operating point.
///
/// `guess` replaces the default plant-state guess (`vd = 1`, `id = iod = Pref`,
/// `iq = ioq = −Qref`, `δ = 0.1`, `vdc = 1`).
pub fn solve_equilibrium(
    p: &ConverterParams,
    sp: &Setpoints,
    ctrl: &ControllerRealization,
    d: &Disturbance,
    guess: Option<&PlantState>,
) -> Result<Equilibrium> {
    p.validate()?;
    let mut dispatch = Vec::new();
    if !ctrl.integral_rows[0] {
        dispatch.push(if ctrl.reads_column[1] { Dispatch::I0Vdc } else { Dispatch::I0Power });
    }
    if !ctrl.integral_rows[2] {
        dispatch.push(Dispatch::E0Law);
    }
    let prob = Problem { p, sp: *sp, ctrl, d: *d, dispatch, nc: ctrl.nstates() };

    let x0 = guess.copied().unwrap_or(PlantState {
        id: sp.yref.p_ref,
        iq: -sp.yref.q_ref,
        vd: 1.0,
        vq: 0.0,
        iod: sp.yref.p_ref,
        ioq: -sp.yref.q_ref,
        delta: 0.1,
        vdc: 1.0,
    });
    let mut z = DVector::zeros(prob.n());
    z.rows_mut(0, 8).copy_from_slice(&x0.to_array());
    z[8 + prob.nc] = sp.yref.p_ref;
    z[9 + prob.nc] = d.omega_g;
    z[10 + prob.nc] = 1.0;
    for (k, dsp) in prob.dispatch.iter().enumerate() {
        z[11 + prob.nc + k] = match dsp {
            Dispatch::I0Vdc | Dispatch::I0Power => sp.u0.i0,
            Dispatch::E0Law => sp.u0.e0,
        };
    }

    let mut r = prob.residual(&z)?;
    let mut norm = inf_norm(&r);
    let mut iterations = 0;
    while norm > TOLERANCE {
        if iterations == MAX_ITERATIONS {
            return Err(GfmError::NoConvergence { iterations, residual: norm });
        }
        iterations += 1;
        let jac = prob.jacobian(&z)?;
        let scale = jac.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let lu = jac.lu();
        let pivot = (0..prob.n()).map(|i| lu.u()[(i, i)].abs()).fold(f64::INFINITY, f64::min);
        if !(pivot > 1e-14 * scale) {
            return Err(GfmError::SingularJacobian { iteration: iterations });
        }
        let step = lu.solve(&r).ok_or(GfmError::SingularJacobian { iteration: iterations })?;
        // backtracking on the residual norm
        let mut t = 1.0;
        loop {
            let trial = &z - t * &step;
            match prob.residual(&trial) {
                Ok(rt) if inf_norm(&rt) < norm => {
                    z = trial;
                    r = rt;
                    break;
                }
                _ if t > 1e-6 => t *= 0.5,
                Ok(rt) => {
                    z = trial;
                    r = rt;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        norm = inf_norm(&r);
        log::debug!("equilibrium iteration {iterations}: residual {norm:.3e}");
    }

    let (x, xi, u, mut setpoints) = prob.unpack(&z);
    let x = PlantState { delta: wrap_angle(x.delta), ..x };
    let y = g_outputs(&x, &u);
    if !ctrl.reads_column[3] && ctrl.integral_rows[2] {
        // Qref is not seen by the controller; report the one consistent with the operating point
        setpoints.yref.q_ref = y.q - (setpoints.yref.v_ref - y.v) / p.dq;
    }
    Ok(Equilibrium { x, u, xi, y, setpoints, residual: norm, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controllers::{preset_with_defaults, realize_phi, Tuning, PRESETS};

    fn solve(name: &str) -> Equilibrium {
        let p = ConverterParams::default();
        let phi = preset_with_defaults(name, &p, &Tuning::new()).unwrap();
        let ctrl = realize_phi(&phi).unwrap();
        solve_equilibrium(&p, &Setpoints::default(), &ctrl, &Disturbance::default(), None).unwrap()
    }

    #[test]
    fn droop_operating_point() {
        let eq = solve("droop-1");
        assert!(eq.residual <= 1e-10);
        assert!((eq.y.p - 0.5).abs() < 1e-9);
        assert!((eq.u.omega_u - 1.0).abs() < 1e-12);
        // lossless power flow from the internal voltage over X = Lf + Lg
        let p = ConverterParams::default();
        let approx = eq.u.eu * 1.0 * eq.x.delta.sin() / (p.lf + p.lg);
        assert!((approx - eq.y.p).abs() < 0.1 * eq.y.p, "{approx} vs {}", eq.y.p);
    }

    #[test]
    fn every_preset_is_a_fixed_point() {
        let p = ConverterParams::default();
        for name in PRESETS {
            let eq = solve(name);
            let dx = f_dynamics(&eq.x, &eq.u, &Disturbance::default(), &p).unwrap();
            let worst = dx.to_array().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(worst < 1e-9, "{name}: {worst}");
            assert!((eq.y.p - 0.5).abs() < 1e-8, "{name}: p = {}", eq.y.p);
            assert!((eq.u.omega_u - 1.0).abs() < 1e-8, "{name}");
            let yr = eq.setpoints.yref;
            let law = (yr.q_ref - eq.y.q) + (yr.v_ref - eq.y.v) / p.dq;
            assert!(law.abs() < 1e-8, "{name}: {law}");
            assert!(eq.x.delta > -std::f64::consts::PI && eq.x.delta <= std::f64::consts::PI);
        }
    }

    #[test]
    fn vsg_voltage_law() {
        let eq = solve("vsg-2");
        let law = (0.0 - eq.y.q) + (1.0 - eq.y.v) / 0.05;
        assert!(law.abs() < 1e-10);
        // integral rows keep the set-points as given
        assert_eq!(eq.setpoints, Setpoints::default());
    }

    #[test]
    fn shifted_grid_frequency() {
        let p = ConverterParams::default();
        let phi = preset_with_defaults("droop-1", &p, &Tuning::new()).unwrap();
        let ctrl = realize_phi(&phi).unwrap();
        let mut sp = Setpoints::default();
        sp.yref.omega_g_ref = 0.998;
        let d = Disturbance { omega_g: 0.998, vg: 1.0 };
        let eq = solve_equilibrium(&p, &sp, &ctrl, &d, None).unwrap();
        assert!((eq.y.p - 0.7).abs() < 1e-9);
    }
}
