//! Continuous-time linear systems: state-space containers, composition,
//! spectra, frequency response and the H-infinity norm.

mod eig;
mod freq;
mod hinf;
mod interconnect;

use std::collections::HashSet;

use nalgebra::DMatrix;

use crate::error::{GfmError, Result};

pub use eig::{balance, eigenvalues, is_hurwitz, spectral_abscissa, Spectrum};
pub use freq::{freq_response, log_grid, sigma_max, sigma_max_at};
pub use hinf::{hinf_norm, hinf_norm_grid, GridPeak};
pub use interconnect::{feedback_interconnect, Port, Signal, Wiring};

/// A real state-space model `x' = A x + B u`, `y = C x + D u` with named
/// input and output channels.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
    input_names: Vec<String>,
    output_names: Vec<String>,
}

fn check_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(GfmError::NonFinite(what.to_string()))
    }
}

fn check_unique(names: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for n in names {
        if !seen.insert(n.as_str()) {
            return Err(GfmError::DuplicateLabel(n.clone()));
        }
    }
    Ok(())
}

fn default_names(prefix: &str, count: usize) -> Vec<String> {
    (0..count).map(|i| format!("{prefix}{i}")).collect()
}

impl StateSpaceModel {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        input_names: Vec<String>,
        output_names: Vec<String>,
    ) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(GfmError::Dimension(format!("A is {}x{}", a.nrows(), a.ncols())));
        }
        let m = b.ncols();
        let p = c.nrows();
        if b.nrows() != n {
            return Err(GfmError::Dimension(format!("B has {} rows, A has {n}", b.nrows())));
        }
        if c.ncols() != n {
            return Err(GfmError::Dimension(format!("C has {} columns, A has {n}", c.ncols())));
        }
        if d.nrows() != p || d.ncols() != m {
            return Err(GfmError::Dimension(format!(
                "D is {}x{}, expected {p}x{m}",
                d.nrows(),
                d.ncols()
            )));
        }
        if input_names.len() != m {
            return Err(GfmError::Dimension(format!("{} input names for {m} inputs", input_names.len())));
        }
        if output_names.len() != p {
            return Err(GfmError::Dimension(format!("{} output names for {p} outputs", output_names.len())));
        }
        check_finite(&a, "A")?;
        check_finite(&b, "B")?;
        check_finite(&c, "C")?;
        check_finite(&d, "D")?;
        check_unique(&input_names)?;
        check_unique(&output_names)?;
        Ok(Self { a, b, c, d, input_names, output_names })
    }

    /// Model with generated channel names `u0..`, `y0..`.
    pub fn from_matrices(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let (m, p) = (b.ncols(), c.nrows());
        Self::new(a, b, c, d, default_names("u", m), default_names("y", p))
    }

    /// Static gain `y = D u` with no states.
    pub fn static_gain(d: DMatrix<f64>) -> Result<Self> {
        let (p, m) = d.shape();
        Self::from_matrices(DMatrix::zeros(0, 0), DMatrix::zeros(0, m), DMatrix::zeros(p, 0), d)
    }

    /// SISO realization of `(num) / (den)` given as polynomial coefficients in
    /// descending powers of `s`; the leading denominator coefficient must be
    /// non-zero and `deg num <= deg den`.
    pub fn from_tf(num: &[f64], den: &[f64]) -> Result<Self> {
        let den = trim_leading(den);
        let num = trim_leading(num);
        if den.is_empty() {
            return Err(GfmError::Domain("zero denominator".into()));
        }
        if num.len() > den.len() {
            return Err(GfmError::Domain("improper transfer function".into()));
        }
        let n = den.len() - 1;
        let lead = den[0];
        let a_coef: Vec<f64> = den[1..].iter().map(|v| v / lead).collect();
        let mut b_coef = vec![0.0; n + 1];
        for (i, v) in num.iter().enumerate() {
            b_coef[n + 1 - num.len() + i] = v / lead;
        }
        let d0 = b_coef[0];
        // controllable canonical form
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n.saturating_sub(1) {
            a[(i, i + 1)] = 1.0;
        }
        if n > 0 {
            for j in 0..n {
                a[(n - 1, j)] = -a_coef[n - 1 - j];
            }
        }
        let mut b = DMatrix::zeros(n, 1);
        if n > 0 {
            b[(n - 1, 0)] = 1.0;
        }
        let mut c = DMatrix::zeros(1, n);
        for j in 0..n {
            c[(0, j)] = b_coef[n - j] - a_coef[n - 1 - j] * d0;
        }
        let d = DMatrix::from_element(1, 1, d0);
        Self::from_matrices(a, b, c, d)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }
    pub fn input_names(&self) -> &[String] {
        &self.input_names
    }
    pub fn output_names(&self) -> &[String] {
        &self.output_names
    }
    pub fn nstates(&self) -> usize {
        self.a.nrows()
    }
    pub fn ninputs(&self) -> usize {
        self.b.ncols()
    }
    pub fn noutputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn input_index(&self, name: &str) -> Result<usize> {
        self.input_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| GfmError::UnknownChannel(name.to_string()))
    }

    pub fn output_index(&self, name: &str) -> Result<usize> {
        self.output_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| GfmError::UnknownChannel(name.to_string()))
    }

    pub fn with_names(self, input_names: Vec<String>, output_names: Vec<String>) -> Result<Self> {
        Self::new(self.a, self.b, self.c, self.d, input_names, output_names)
    }

    /// Sub-system from the selected inputs to the selected outputs.
    pub fn select(&self, inputs: &[usize], outputs: &[usize]) -> Result<Self> {
        let n = self.nstates();
        for &i in inputs {
            if i >= self.ninputs() {
                return Err(GfmError::Dimension(format!("input index {i} out of range")));
            }
        }
        for &o in outputs {
            if o >= self.noutputs() {
                return Err(GfmError::Dimension(format!("output index {o} out of range")));
            }
        }
        let b = DMatrix::from_fn(n, inputs.len(), |r, c| self.b[(r, inputs[c])]);
        let c = DMatrix::from_fn(outputs.len(), n, |r, c| self.c[(outputs[r], c)]);
        let d = DMatrix::from_fn(outputs.len(), inputs.len(), |r, c| self.d[(outputs[r], inputs[c])]);
        Self::new(
            self.a.clone(),
            b,
            c,
            d,
            inputs.iter().map(|&i| self.input_names[i].clone()).collect(),
            outputs.iter().map(|&o| self.output_names[o].clone()).collect(),
        )
    }

    /// Same system under the state transformation `x = T z` with diagonal `T`.
    pub fn scale_states(&self, scale: &[f64]) -> Self {
        let n = self.nstates();
        let a = DMatrix::from_fn(n, n, |i, j| self.a[(i, j)] * scale[j] / scale[i]);
        let b = DMatrix::from_fn(n, self.ninputs(), |i, j| self.b[(i, j)] / scale[i]);
        let c = DMatrix::from_fn(self.noutputs(), n, |i, j| self.c[(i, j)] * scale[j]);
        Self { a, b, c, d: self.d.clone(), ..self.clone() }
    }
}

fn trim_leading(p: &[f64]) -> &[f64] {
    let start = p.iter().position(|&v| v != 0.0).unwrap_or(p.len());
    &p[start..]
}

/// Cascade `g2 ∘ g1`: the outputs of `g1` drive the inputs of `g2`.
pub fn series(g1: &StateSpaceModel, g2: &StateSpaceModel) -> Result<StateSpaceModel> {
    if g1.noutputs() != g2.ninputs() {
        return Err(GfmError::Dimension(format!(
            "series: g1 has {} outputs, g2 has {} inputs",
            g1.noutputs(),
            g2.ninputs()
        )));
    }
    let (n1, n2) = (g1.nstates(), g2.nstates());
    let n = n1 + n2;
    let mut a = DMatrix::zeros(n, n);
    a.view_mut((0, 0), (n1, n1)).copy_from(&g1.a);
    a.view_mut((n1, 0), (n2, n1)).copy_from(&(&g2.b * &g1.c));
    a.view_mut((n1, n1), (n2, n2)).copy_from(&g2.a);
    let mut b = DMatrix::zeros(n, g1.ninputs());
    b.view_mut((0, 0), (n1, g1.ninputs())).copy_from(&g1.b);
    b.view_mut((n1, 0), (n2, g1.ninputs())).copy_from(&(&g2.b * &g1.d));
    let mut c = DMatrix::zeros(g2.noutputs(), n);
    c.view_mut((0, 0), (g2.noutputs(), n1)).copy_from(&(&g2.d * &g1.c));
    c.view_mut((0, n1), (g2.noutputs(), n2)).copy_from(&g2.c);
    let d = &g2.d * &g1.d;
    StateSpaceModel::new(a, b, c, d, g1.input_names.clone(), g2.output_names.clone())
}

/// Block-diagonal stacking: inputs and outputs are concatenated. Channel
/// names are prefixed with the block index when they would collide.
pub fn append(systems: &[&StateSpaceModel]) -> Result<StateSpaceModel> {
    let n: usize = systems.iter().map(|s| s.nstates()).sum();
    let m: usize = systems.iter().map(|s| s.ninputs()).sum();
    let p: usize = systems.iter().map(|s| s.noutputs()).sum();
    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, m);
    let mut c = DMatrix::zeros(p, n);
    let mut d = DMatrix::zeros(p, m);
    let (mut xo, mut uo, mut yo) = (0, 0, 0);
    let mut inames = Vec::with_capacity(m);
    let mut onames = Vec::with_capacity(p);
    for s in systems {
        let (ns, ms, ps) = (s.nstates(), s.ninputs(), s.noutputs());
        a.view_mut((xo, xo), (ns, ns)).copy_from(&s.a);
        b.view_mut((xo, uo), (ns, ms)).copy_from(&s.b);
        c.view_mut((yo, xo), (ps, ns)).copy_from(&s.c);
        d.view_mut((yo, uo), (ps, ms)).copy_from(&s.d);
        inames.extend(s.input_names.iter().cloned());
        onames.extend(s.output_names.iter().cloned());
        xo += ns;
        uo += ms;
        yo += ps;
    }
    if check_unique(&inames).is_err() || check_unique(&onames).is_err() {
        inames.clear();
        onames.clear();
        for (k, s) in systems.iter().enumerate() {
            inames.extend(s.input_names.iter().map(|nm| format!("{k}.{nm}")));
            onames.extend(s.output_names.iter().map(|nm| format!("{k}.{nm}")));
        }
    }
    StateSpaceModel::new(a, b, c, d, inames, onames)
}
