//! Nonlinear closed-loop simulation of the converter with a realized `Φ`.
//!
//! Plant and controller states are integrated together by classical RK4 on
//! a fixed grid; events switch set-points or grid quantities at grid points.

mod csv_io;
mod lti;
mod metrics;
mod scenario;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controllers::{realize_phi, ControllerRealization, PhiSpec};
use crate::error::{GfmError, Result};
use crate::plant::{
    f_dynamics, g_outputs, solve_equilibrium, wrap_angle, ControlInput, ConverterParams, Disturbance, OutputVector,
    PlantState, Setpoints, VDC_MIN,
};

pub use csv_io::{export_csv, read_csv, to_csv_string, CSV_HEADER};
pub use lti::simulate_lti;
pub use metrics::{step_metrics, Metrics, MetricsOutcome};
pub use scenario::{Event, Quantity, Scenario, DEFAULT_DT, DEFAULT_SAMPLE_PERIOD, SCENARIOS};

/// State norm beyond which a run is declared diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub t: Vec<f64>,
    pub x: Vec<PlantState>,
    pub y: Vec<OutputVector>,
    pub u: Vec<ControlInput>,
    /// Sample index at which the run stopped when it diverged.
    pub diverged_at: Option<usize>,
    /// Metrics per output channel, in `OutputVector::NAMES` order.
    pub metrics: Vec<MetricsOutcome>,
}

impl SimResult {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Series of output `k` (`OutputVector::NAMES` order).
    pub fn output(&self, k: usize) -> Vec<f64> {
        self.y.iter().map(|y| y.to_array()[k]).collect()
    }

    pub fn output_by_name(&self, name: &str) -> Result<Vec<f64>> {
        let k = OutputVector::NAMES
            .iter()
            .position(|n| *n == name)
            .ok_or_else(|| GfmError::UnknownChannel(name.to_string()))?;
        Ok(self.output(k))
    }
}

/// Metrics of output `channel` over `window` (seconds).
pub fn metrics(result: &SimResult, channel: usize, window: (f64, f64)) -> MetricsOutcome {
    step_metrics(&result.t, &result.output(channel), window)
}

/// Controller matrices split into reference and measurement blocks.
struct CtrlMats {
    a: DMatrix<f64>,
    br: DMatrix<f64>,
    bm: DMatrix<f64>,
    c: DMatrix<f64>,
    dr: DMatrix<f64>,
    dm: DMatrix<f64>,
}

impl CtrlMats {
    fn new(ctrl: &ControllerRealization) -> Self {
        let m = &ctrl.model;
        Self {
            a: m.a().clone(),
            br: m.b().columns(0, 5).into_owned(),
            bm: m.b().columns(5, 5).into_owned(),
            c: m.c().clone(),
            dr: m.d().columns(0, 5).into_owned(),
            dm: m.d().columns(5, 5).into_owned(),
        }
    }
}

/// Closed-loop vector field on `[x; ξ]` for fixed set-points and grid.
struct Loop<'a> {
    p: &'a ConverterParams,
    m: &'a CtrlMats,
    sp: Setpoints,
    d: Disturbance,
}

impl Loop<'_> {
    /// Control input and measured outputs. Only `ωu` enters `y` through `u`,
    /// so the loop through the controller feedthrough is solved for it first.
    fn io(&self, x: &PlantState, xi: &DVector<f64>) -> (ControlInput, OutputVector) {
        let y_free = g_outputs(x, &ControlInput { iu: 0.0, omega_u: 0.0, eu: 0.0 });
        let mut meas = DVector::from_row_slice(&y_free.to_array());
        meas[2] = 0.0;
        let r = DVector::from_row_slice(&self.sp.yref.to_array());
        let base = &self.m.c * xi + &self.m.dr * &r + &self.m.dm * &meas;
        let u0 = [self.sp.u0.i0, self.sp.u0.omega_0, self.sp.u0.e0];
        let w = (u0[1] + base[1]) / (1.0 - self.m.dm[(1, 2)]);
        let du = |i: usize| u0[i] + base[i] + self.m.dm[(i, 2)] * w;
        let u = ControlInput { iu: du(0), omega_u: w, eu: du(2) };
        (u, g_outputs(x, &u))
    }

    fn deriv(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        let nc = self.m.a.nrows();
        let x = PlantState::from_slice(&z.as_slice()[..8]);
        let xi = z.rows(8, nc).into_owned();
        let (u, y) = self.io(&x, &xi);
        let dx = f_dynamics(&x, &u, &self.d, self.p)?;
        let r = DVector::from_row_slice(&self.sp.yref.to_array());
        let meas = DVector::from_row_slice(&y.to_array());
        let dxi = &self.m.a * &xi + &self.m.br * r + &self.m.bm * meas;
        let mut out = DVector::zeros(8 + nc);
        out.rows_mut(0, 8).copy_from_slice(&dx.to_array());
        out.rows_mut(8, nc).copy_from_slice(dxi.as_slice());
        Ok(out)
    }

    fn rk4(&self, z: &DVector<f64>, h: f64) -> Result<DVector<f64>> {
        let k1 = self.deriv(z)?;
        let k2 = self.deriv(&(z + &k1 * (0.5 * h)))?;
        let k3 = self.deriv(&(z + &k2 * (0.5 * h)))?;
        let k4 = self.deriv(&(z + &k3 * h))?;
        Ok(z + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
    }
}

/// Simulates the realized controller `ctrl` from the equilibrium of the
/// scenario's initial conditions.
pub fn simulate_realized(params: &ConverterParams, ctrl: &ControllerRealization, scenario: &Scenario) -> Result<SimResult> {
    scenario.validate()?;
    let eq = solve_equilibrium(params, &scenario.setpoints, ctrl, &scenario.disturbance, None)?;
    let mats = CtrlMats::new(ctrl);
    let nc = ctrl.nstates();
    let mut lp = Loop { p: params, m: &mats, sp: eq.setpoints, d: scenario.disturbance };

    let steps = scenario.steps();
    let every = scenario.snap(scenario.sample_period, "sample period").max(1);
    let event_steps: Vec<usize> = scenario.events.iter().map(|e| scenario.snap(e.t, e.quantity.name())).collect();

    let mut z = DVector::zeros(8 + nc);
    z.rows_mut(0, 8).copy_from_slice(&eq.x.to_array());
    z.rows_mut(8, nc).copy_from_slice(&eq.xi);

    let mut out = SimResult { t: vec![], x: vec![], y: vec![], u: vec![], diverged_at: None, metrics: vec![] };
    let mut next_event = 0;
    for k in 0..=steps {
        if k % every == 0 {
            let x = PlantState::from_slice(&z.as_slice()[..8]);
            let (u, y) = lp.io(&x, &z.rows(8, nc).into_owned());
            out.t.push(k as f64 * scenario.dt);
            out.x.push(x);
            out.y.push(y);
            out.u.push(u);
        }
        // events take effect from their grid point on
        while next_event < event_steps.len() && event_steps[next_event] <= k {
            let e = scenario.events[next_event];
            e.quantity.apply(e.value, &mut lp.sp, &mut lp.d);
            next_event += 1;
        }
        if k == steps {
            break;
        }
        let stepped = lp.rk4(&z, scenario.dt);
        match stepped {
            Ok(mut zn) if zn.iter().all(|v| v.is_finite() && v.abs() <= DIVERGENCE_LIMIT) && zn[7] > VDC_MIN => {
                zn[6] = wrap_angle(zn[6]);
                z = zn;
            }
            Ok(_) | Err(GfmError::Singularity { .. }) => {
                log::warn!("simulation diverged at t = {} s", (k + 1) as f64 * scenario.dt);
                out.diverged_at = Some(out.t.len());
                return Ok(out);
            }
            Err(e) => return Err(e),
        }
    }
    let window = (scenario.first_event_time(), scenario.duration);
    out.metrics = (0..5).map(|c| metrics(&out, c, window)).collect();
    Ok(out)
}

pub fn simulate(params: &ConverterParams, phi: &PhiSpec, scenario: &Scenario) -> Result<SimResult> {
    simulate_realized(params, &realize_phi(phi)?, scenario)
}

/// One line of a comparison: a controller on a scenario.
#[derive(Debug, Clone)]
pub struct CompareRow {
    pub controller: String,
    pub scenario: String,
    pub result: std::result::Result<SimResult, String>,
}

/// Simulates every controller on every scenario in parallel. Failures are
/// kept per row.
pub fn compare(params: &ConverterParams, specs: &[(String, PhiSpec)], scenarios: &[Scenario]) -> Vec<CompareRow> {
    let jobs: Vec<(&(String, PhiSpec), &Scenario)> =
        scenarios.iter().flat_map(|s| specs.iter().map(move |c| (c, s))).collect();
    jobs.par_iter()
        .map(|((name, spec), sc)| {
            let result = simulate(params, spec, sc).map_err(|e| e.to_string()).and_then(|r| match r.diverged_at {
                Some(i) => Err(format!("diverged at t = {} s", r.t.get(i.saturating_sub(1)).copied().unwrap_or(0.0))),
                None => Ok(r),
            });
            CompareRow { controller: name.clone(), scenario: sc.name.clone(), result }
        })
        .collect()
}

/// Largest deviation between output `channel` of two runs on the same grid.
pub fn max_deviation(a: &SimResult, b: &SimResult, channel: usize) -> Result<f64> {
    if a.t != b.t {
        return Err(GfmError::Dimension("runs are sampled on different grids".into()));
    }
    let (ya, yb) = (a.output(channel), b.output(channel));
    Ok(ya.iter().zip(&yb).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max))
}
