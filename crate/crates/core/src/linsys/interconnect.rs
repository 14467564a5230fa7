//! Feedback interconnection of a plant and a controller.
//!
//! Both systems are stacked, every loop connection adds a term
//! `u_dest += gain * y_src`, and exogenous signals are summed into chosen
//! inputs. With `u = Q y + E w` and `y = C x + D u` the loop closes through
//! `u = (I − Q D)^-1 (Q C x + E w)`.

use nalgebra::DMatrix;

use super::{append, StateSpaceModel};
use crate::error::{GfmError, Result};

/// A channel of one of the two subsystems, addressed by name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Port {
    Plant(String),
    Ctrl(String),
}

impl Port {
    pub fn plant(name: &str) -> Self {
        Port::Plant(name.to_string())
    }
    pub fn ctrl(name: &str) -> Self {
        Port::Ctrl(name.to_string())
    }
}

impl std::fmt::Display for Port {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Port::Plant(n) => write!(f, "plant.{n}"),
            Port::Ctrl(n) => write!(f, "ctrl.{n}"),
        }
    }
}

/// A signal available for the closed-loop outputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Signal {
    /// Output channel of the plant or controller.
    Output(Port),
    /// Input channel of the plant or controller (after loop closure).
    Input(Port),
    /// An exogenous input of the closed loop.
    Exogenous(String),
}

#[derive(Debug, Clone, Default)]
pub struct Wiring {
    connections: Vec<(Port, Port, f64)>,
    exogenous: Vec<(String, Vec<(Port, f64)>)>,
    outputs: Vec<(String, Vec<(Signal, f64)>)>,
}

impl Wiring {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loop connection: input `dest` receives `gain` times output `src`.
    pub fn connect(mut self, dest: Port, src: Port, gain: f64) -> Self {
        self.connections.push((dest, src, gain));
        self
    }

    /// Declares an exogenous input summed into the listed inputs.
    pub fn exogenous(mut self, name: &str, targets: Vec<(Port, f64)>) -> Self {
        self.exogenous.push((name.to_string(), targets));
        self
    }

    /// Declares a closed-loop output as a linear combination of signals.
    pub fn output(mut self, name: &str, terms: Vec<(Signal, f64)>) -> Self {
        self.outputs.push((name.to_string(), terms));
        self
    }

    pub fn exogenous_names(&self) -> Vec<&str> {
        self.exogenous.iter().map(|(n, _)| n.as_str()).collect()
    }
}

fn input_slot(plant: &StateSpaceModel, ctrl: &StateSpaceModel, port: &Port) -> Result<usize> {
    match port {
        Port::Plant(n) => plant.input_index(n),
        Port::Ctrl(n) => Ok(plant.ninputs() + ctrl.input_index(n)?),
    }
    .map_err(|_| GfmError::UnknownChannel(format!("input {port}")))
}

fn output_slot(plant: &StateSpaceModel, ctrl: &StateSpaceModel, port: &Port) -> Result<usize> {
    match port {
        Port::Plant(n) => plant.output_index(n),
        Port::Ctrl(n) => Ok(plant.noutputs() + ctrl.output_index(n)?),
    }
    .map_err(|_| GfmError::UnknownChannel(format!("output {port}")))
}

/// Closes the loop described by `wiring`. The result has the declared
/// exogenous signals as inputs and the declared outputs as outputs.
pub fn feedback_interconnect(
    plant: &StateSpaceModel,
    ctrl: &StateSpaceModel,
    wiring: &Wiring,
) -> Result<StateSpaceModel> {
    let stacked = append(&[plant, ctrl])?;
    let (a, b, c, d) = (stacked.a(), stacked.b(), stacked.c(), stacked.d());
    let n = stacked.nstates();
    let m = stacked.ninputs();
    let nw = wiring.exogenous.len();

    let mut q = DMatrix::zeros(m, stacked.noutputs());
    for (dest, src, gain) in &wiring.connections {
        let i = input_slot(plant, ctrl, dest)?;
        let o = output_slot(plant, ctrl, src)?;
        q[(i, o)] += gain;
    }
    let mut e = DMatrix::zeros(m, nw);
    for (k, (_, targets)) in wiring.exogenous.iter().enumerate() {
        for (port, gain) in targets {
            e[(input_slot(plant, ctrl, port)?, k)] += gain;
        }
    }

    let qd = &q * d;
    let loop_matrix = DMatrix::identity(m, m) - &qd;
    let lu = loop_matrix.clone().lu();
    let pivot_min = (0..m).map(|i| lu.u()[(i, i)].abs()).fold(f64::INFINITY, f64::min);
    let closure = if m == 0 {
        Some(DMatrix::zeros(0, 0))
    } else if pivot_min <= 1e-10 {
        None
    } else {
        lu.try_inverse()
    };
    let Some(closure) = closure else {
        let mut paths = Vec::new();
        for (dest, src, _) in &wiring.connections {
            let o = output_slot(plant, ctrl, src)?;
            if (0..m).any(|i| d[(o, i)] != 0.0 && q.column(o).iter().any(|v| *v != 0.0)) {
                paths.push(format!("{src} -> {dest}"));
            }
        }
        return Err(GfmError::IllPosed { path: paths.join(", ") });
    };

    // u = U_x x + U_w w
    let u_x = &closure * &q * c;
    let u_w = &closure * &e;
    let y_x = c + d * &u_x;
    let y_w = d * &u_w;

    let acl = a + b * &u_x;
    let bcl = b * &u_w;

    let mut ccl = DMatrix::zeros(wiring.outputs.len(), n);
    let mut dcl = DMatrix::zeros(wiring.outputs.len(), nw);
    for (r, (_, terms)) in wiring.outputs.iter().enumerate() {
        for (sig, gain) in terms {
            match sig {
                Signal::Output(port) => {
                    let o = output_slot(plant, ctrl, port)?;
                    for j in 0..n {
                        ccl[(r, j)] += gain * y_x[(o, j)];
                    }
                    for k in 0..nw {
                        dcl[(r, k)] += gain * y_w[(o, k)];
                    }
                }
                Signal::Input(port) => {
                    let i = input_slot(plant, ctrl, port)?;
                    for j in 0..n {
                        ccl[(r, j)] += gain * u_x[(i, j)];
                    }
                    for k in 0..nw {
                        dcl[(r, k)] += gain * u_w[(i, k)];
                    }
                }
                Signal::Exogenous(name) => {
                    let k = wiring
                        .exogenous
                        .iter()
                        .position(|(nm, _)| nm == name)
                        .ok_or_else(|| GfmError::UnknownChannel(format!("exogenous {name}")))?;
                    dcl[(r, k)] += gain;
                }
            }
        }
    }
    StateSpaceModel::new(
        acl,
        bcl,
        ccl,
        dcl,
        wiring.exogenous.iter().map(|(nm, _)| nm.clone()).collect(),
        wiring.outputs.iter().map(|(nm, _)| nm.clone()).collect(),
    )
}
