use nalgebra::DMatrix;

use super::model::VDC_MIN;
use super::{ControlInput, ConverterParams, Disturbance, PlantState};
use crate::error::{GfmError, Result};
use crate::linsys::StateSpaceModel;

/// Input channels of the linearized plant: controls then disturbances.
pub const PLANT_INPUTS: [&str; 5] = ["iu", "omega_u", "Eu", "omega_g", "Vg"];
/// Output channels of the linearized plant.
pub const PLANT_OUTPUTS: [&str; 5] = ["vdc", "p", "omega_u", "q", "V"];

const ID: usize = 0;
const IQ: usize = 1;
const VD: usize = 2;
const VQ: usize = 3;
const IOD: usize = 4;
const IOQ: usize = 5;
const DELTA: usize = 6;
const VDC: usize = 7;

const IU: usize = 0;
const WU: usize = 1;
const EU: usize = 2;
const WG: usize = 3;
const VG: usize = 4;

/// Exact Jacobians of the plant at `(x0, u0, d0)`.
pub fn linearize(p: &ConverterParams, x0: &PlantState, u0: &ControlInput, d0: &Disturbance) -> Result<StateSpaceModel> {
    if !(x0.vdc > VDC_MIN) {
        return Err(GfmError::Singularity { vdc: x0.vdc });
    }
    let wb = p.omega_b;
    let rf = p.effective_rf();
    let (sin_d, cos_d) = x0.delta.sin_cos();
    let w = u0.omega_u;
    let x = x0;

    let mut a = DMatrix::zeros(8, 8);
    let mut b = DMatrix::zeros(8, 5);

    a[(ID, ID)] = -wb * rf / p.lf;
    a[(ID, IQ)] = wb * w;
    a[(ID, VD)] = -wb / p.lf;
    b[(ID, EU)] = wb / p.lf;
    b[(ID, WU)] = wb * x.iq;

    a[(IQ, ID)] = -wb * w;
    a[(IQ, IQ)] = -wb * rf / p.lf;
    a[(IQ, VQ)] = -wb / p.lf;
    b[(IQ, WU)] = -wb * x.id;

    a[(VD, ID)] = wb / p.cf;
    a[(VD, IOD)] = -wb / p.cf;
    a[(VD, VQ)] = wb * w;
    b[(VD, WU)] = wb * x.vq;

    a[(VQ, IQ)] = wb / p.cf;
    a[(VQ, IOQ)] = -wb / p.cf;
    a[(VQ, VD)] = -wb * w;
    b[(VQ, WU)] = -wb * x.vd;

    a[(IOD, VD)] = wb / p.lg;
    a[(IOD, DELTA)] = wb / p.lg * d0.vg * sin_d;
    a[(IOD, IOD)] = -wb * p.rg / p.lg;
    a[(IOD, IOQ)] = wb * w;
    b[(IOD, WU)] = wb * x.ioq;
    b[(IOD, VG)] = -wb / p.lg * cos_d;

    a[(IOQ, VQ)] = wb / p.lg;
    a[(IOQ, DELTA)] = wb / p.lg * d0.vg * cos_d;
    a[(IOQ, IOQ)] = -wb * p.rg / p.lg;
    a[(IOQ, IOD)] = -wb * w;
    b[(IOQ, WU)] = -wb * x.iod;
    b[(IOQ, VG)] = wb / p.lg * sin_d;

    b[(DELTA, WU)] = wb;
    b[(DELTA, WG)] = -wb;

    let cv = p.cdc * x.vdc;
    b[(VDC, IU)] = wb / p.cdc;
    b[(VDC, EU)] = -wb * x.id / cv;
    a[(VDC, ID)] = -wb * u0.eu / cv;
    a[(VDC, VDC)] = wb * u0.eu * x.id / (cv * x.vdc);

    let mut c = DMatrix::zeros(5, 8);
    let mut d = DMatrix::zeros(5, 5);
    c[(0, VDC)] = 1.0;
    c[(1, VD)] = x.iod;
    c[(1, VQ)] = x.ioq;
    c[(1, IOD)] = x.vd;
    c[(1, IOQ)] = x.vq;
    d[(2, WU)] = 1.0;
    c[(3, VD)] = -x.ioq;
    c[(3, VQ)] = x.iod;
    c[(3, IOD)] = x.vq;
    c[(3, IOQ)] = -x.vd;
    let v = x.vd.hypot(x.vq);
    if v > 0.0 {
        c[(4, VD)] = x.vd / v;
        c[(4, VQ)] = x.vq / v;
    }

    StateSpaceModel::new(
        a,
        b,
        c,
        d,
        PLANT_INPUTS.iter().map(|s| s.to_string()).collect(),
        PLANT_OUTPUTS.iter().map(|s| s.to_string()).collect(),
    )
}
