//! State-space realization of `Φ`.
//!
//! The block reads the five references and the five measurements on
//! separate inputs so that feedback-only elements filter the measurement
//! alone. Pure integral parts of a row share one integrator fed by the sum
//! of their weighted errors.

use nalgebra::DMatrix;

use super::{Element, Factor, PhiSpec};
use crate::error::Result;
use crate::linsys::StateSpaceModel;

pub const REF_INPUTS: [&str; 5] = ["ref_vdc", "ref_p", "ref_omega", "ref_q", "ref_v"];
pub const MEAS_INPUTS: [&str; 5] = ["meas_vdc", "meas_p", "meas_omega", "meas_q", "meas_v"];
pub const CTRL_OUTPUTS: [&str; 3] = ["d_iu", "d_omega_u", "d_eu"];

const NU: usize = 10;

/// Realized controller with the structural facts the equilibrium solver
/// needs.
#[derive(Debug, Clone)]
pub struct ControllerRealization {
    /// Inputs `REF_INPUTS ++ MEAS_INPUTS`, outputs `CTRL_OUTPUTS` (increments on `u0`).
    pub model: StateSpaceModel,
    pub state_names: Vec<String>,
    /// Row `i` contains integral action.
    pub integral_rows: [bool; 3],
    /// Column `j` is read by some non-zero element.
    pub reads_column: [bool; 5],
}

impl ControllerRealization {
    pub fn nstates(&self) -> usize {
        self.model.nstates()
    }
}

/// Affine combination of controller states and inputs.
#[derive(Clone)]
struct Sig {
    x: Vec<f64>,
    u: [f64; NU],
}

impl Sig {
    fn input(k: usize, gain: f64) -> Self {
        let mut u = [0.0; NU];
        u[k] = gain;
        Self { x: Vec::new(), u }
    }

    fn zero() -> Self {
        Self { x: Vec::new(), u: [0.0; NU] }
    }

    fn add_scaled(&mut self, other: &Sig, k: f64) {
        if self.x.len() < other.x.len() {
            self.x.resize(other.x.len(), 0.0);
        }
        for (a, b) in self.x.iter_mut().zip(&other.x) {
            *a += k * b;
        }
        for (a, b) in self.u.iter_mut().zip(&other.u) {
            *a += k * b;
        }
    }

    fn is_zero(&self) -> bool {
        self.x.iter().chain(&self.u).all(|v| *v == 0.0)
    }
}

#[derive(Default)]
struct Builder {
    a: Vec<Sig>,
    names: Vec<String>,
}

impl Builder {
    /// Appends the states of `sys` driven by `input`; returns its output.
    fn add(&mut self, sys: &StateSpaceModel, input: &Sig, tag: &str) -> Sig {
        let n0 = self.a.len();
        let ns = sys.nstates();
        for k in 0..ns {
            let mut row = Sig::zero();
            row.x.resize(n0 + ns, 0.0);
            for j in 0..ns {
                row.x[n0 + j] = sys.a()[(k, j)];
            }
            row.add_scaled(input, sys.b()[(k, 0)]);
            self.a.push(row);
            self.names.push(if ns == 1 { tag.to_string() } else { format!("{tag}.{k}") });
        }
        let mut out = Sig::zero();
        out.x.resize(n0 + ns, 0.0);
        for j in 0..ns {
            out.x[n0 + j] = sys.c()[(0, j)];
        }
        out.add_scaled(input, sys.d()[(0, 0)]);
        out
    }

    fn add_integrator(&mut self, input: Sig, tag: &str) -> Sig {
        let n0 = self.a.len();
        self.a.push(input);
        self.names.push(tag.to_string());
        let mut out = Sig::zero();
        out.x.resize(n0 + 1, 0.0);
        out.x[n0] = 1.0;
        out
    }
}

/// Integral/proportional split of a lone `I` or `PI` factor.
fn mergeable(el: &Element) -> Option<(f64, f64)> {
    match el.factors.as_slice() {
        [Factor::I { ki }] => Some((0.0, *ki)),
        [Factor::PI { kp, ki }] => Some((*kp, *ki)),
        _ => None,
    }
}

pub fn realize_phi(spec: &PhiSpec) -> Result<ControllerRealization> {
    spec.validate()?;
    let mut b = Builder::default();
    let mut outs = [Sig::zero(), Sig::zero(), Sig::zero()];
    let mut integral_rows = [false; 3];
    let mut reads_column = [false; 5];

    for (i, row) in spec.grid.iter().enumerate() {
        let mut integ = Sig::zero();
        for (j, el) in row.iter().enumerate() {
            if el.is_zero() {
                continue;
            }
            reads_column[j] = true;
            integral_rows[i] |= el.has_integrator();
            let tag = format!("phi{}{}", i + 1, j + 1);

            let mut err = Sig::input(j, 1.0);
            match &el.feedback_only {
                Some(fb) if !fb.is_zero() => {
                    let filtered = b.add(&fb.realize()?, &Sig::input(5 + j, 1.0), &format!("{tag}.fb"));
                    err.add_scaled(&filtered, -1.0);
                }
                Some(_) => {}
                None => err.add_scaled(&Sig::input(5 + j, 1.0), -1.0),
            }

            match mergeable(el) {
                Some((kp, ki)) => {
                    outs[i].add_scaled(&err, kp);
                    integ.add_scaled(&err, ki);
                }
                None => {
                    let y = b.add(&el.realize()?, &err, &tag);
                    outs[i].add_scaled(&y, 1.0);
                }
            }
        }
        if !integ.is_zero() {
            let y = b.add_integrator(integ, &format!("int{}", i + 1));
            outs[i].add_scaled(&y, 1.0);
        }
    }

    let n = b.a.len();
    let mut a = DMatrix::zeros(n, n);
    let mut bm = DMatrix::zeros(n, NU);
    for (r, row) in b.a.iter().enumerate() {
        for (c, v) in row.x.iter().enumerate() {
            a[(r, c)] = *v;
        }
        for (c, v) in row.u.iter().enumerate() {
            bm[(r, c)] = *v;
        }
    }
    let mut c = DMatrix::zeros(3, n);
    let mut d = DMatrix::zeros(3, NU);
    for (r, sig) in outs.iter().enumerate() {
        for (k, v) in sig.x.iter().enumerate() {
            c[(r, k)] = *v;
        }
        for (k, v) in sig.u.iter().enumerate() {
            d[(r, k)] = *v;
        }
    }
    let inputs = REF_INPUTS.iter().chain(MEAS_INPUTS.iter()).map(|s| s.to_string()).collect();
    let outputs = CTRL_OUTPUTS.iter().map(|s| s.to_string()).collect();
    Ok(ControllerRealization {
        model: StateSpaceModel::new(a, bm, c, d, inputs, outputs)?,
        state_names: b.names,
        integral_rows,
        reads_column,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controllers::{gains_to_phi, preset_with_defaults, GainVector, Tuning};
    use crate::linsys::freq_response;
    use crate::plant::ConverterParams;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn realize(name: &str) -> (PhiSpec, ControllerRealization) {
        let phi = preset_with_defaults(name, &ConverterParams::default(), &Tuning::new()).unwrap();
        let r = realize_phi(&phi).unwrap();
        (phi, r)
    }

    #[test]
    fn state_counts() {
        assert_eq!(realize("droop-1").1.nstates(), 1);
        assert_eq!(realize("psc-1").1.nstates(), 1);
        assert_eq!(realize("droop-5").1.nstates(), 3);
        assert_eq!(realize("vsg-2").1.nstates(), 3);
        assert_eq!(realize("matching-1").1.nstates(), 1);
        assert_eq!(realize("mimo-gfm").1.nstates(), 3);
    }

    #[test]
    fn structural_flags() {
        let (_, r) = realize("matching-1");
        assert_eq!(r.integral_rows, [false, false, true]);
        assert_eq!(r.reads_column, [true, false, false, false, true]);
        let (_, r) = realize("vsg-2");
        assert_eq!(r.integral_rows, [true, false, true]);
    }

    /// Every SISO path against the element's rational function.
    fn check_paths(phi: &PhiSpec, r: &ControllerRealization, rng: &mut ChaCha8Rng) {
        for _ in 0..20 {
            let w = 10f64.powf(rng.random_range(-3.0..4.0));
            let h = freq_response(&r.model, w).unwrap();
            let s = Complex64::new(0.0, w);
            for i in 0..3 {
                for j in 0..5 {
                    let el = &phi.grid[i][j];
                    let want_ref = el.eval(s);
                    let want_meas = -el.eval_feedback(s);
                    let got_ref = h[(i, j)];
                    let got_meas = h[(i, 5 + j)];
                    assert!((got_ref - want_ref).norm() <= 1e-9 * want_ref.norm().max(1.0), "ref path {i}{j} at {w}");
                    assert!((got_meas - want_meas).norm() <= 1e-9 * want_meas.norm().max(1.0), "meas path {i}{j} at {w}");
                }
            }
        }
    }

    #[test]
    fn paths_match_elements() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for name in crate::controllers::PRESETS {
            let (phi, r) = realize(name);
            check_paths(&phi, &r, &mut rng);
        }
        let mut phi = PhiSpec::zero(0.01, 0.05);
        phi.grid[1][1] = Element::parse("O(k=0.01,T=0.05,xi=0.4)*PD(k=1,T=0.2){IF(k=1,T=0.1)*D(k=1,T=0.3)}").unwrap();
        phi.grid[1][3] = Element::parse("PI(kp=0.1,ki=2)").unwrap();
        phi.grid[1][4] = Element::parse("I(ki=40)").unwrap();
        phi.grid[0][1] = Element::parse("IF(k=2,T=0.5)*PI(kp=1,ki=3)").unwrap();
        check_paths(&phi, &realize_phi(&phi).unwrap(), &mut rng);
    }

    #[test]
    fn droop5_matches_vsg2_on_feedback_only() {
        let (_, d5) = realize("droop-5");
        let (_, v2) = realize("vsg-2");
        let (p_ref, p_meas, wu) = (1, 6, 1);
        for w in [0.01, 0.3, 5.98, 50.0, 1e3] {
            let hd = freq_response(&d5.model, w).unwrap();
            let hv = freq_response(&v2.model, w).unwrap();
            assert!((hd[(wu, p_meas)] - hv[(wu, p_meas)]).norm() < 1e-12);
            assert!((hd[(wu, p_ref)] - Complex64::new(0.01, 0.0)).norm() < 1e-15);
            assert!((hd[(wu, p_ref)] - hv[(wu, p_ref)]).norm() > 1e-6 * w.min(1.0));
        }
    }

    #[test]
    fn droop_dc_gain_on_p_error() {
        for name in ["droop-1", "droop-5", "psc-1", "vsg-2", "mimo-gfm"] {
            let (_, r) = realize(name);
            // the DC integrator sits on the axis; probe just above it
            let h = freq_response(&r.model, 1e-9).unwrap();
            assert!((h[(1, 1)] - 0.01).norm() < 1e-9, "{name}");
            assert!((h[(1, 6)] + 0.01).norm() < 1e-9, "{name}");
        }
        let k = GainVector::initial();
        let r = realize_phi(&gains_to_phi(&k, &ConverterParams::default()).unwrap()).unwrap();
        assert!((freq_response(&r.model, 1e-9).unwrap()[(1, 1)] - 0.01).norm() < 1e-9);
    }
}
