//! Scalar controller elements of the control transfer matrix.
//!
//! An [`Element`] is a product of [`Factor`]s acting on the error signal,
//! optionally followed by a feedback-only product that filters the measured
//! signal before it is compared with the reference.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{GfmError, Result};
use crate::linsys::{series, StateSpaceModel};

/// Bandwidth ratio of the pole added to derivative factors.
pub const DERIVATIVE_BANDLIMIT: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ElementKind {
    Zero,
    P,
    I,
    D,
    PI,
    PD,
    IF,
    O,
}

/// Parameters as written in the element vocabulary: gain `k`, time
/// constant `T` and damping ratio `ξ`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ElementParams {
    pub k: Option<f64>,
    pub t: Option<f64>,
    pub xi: Option<f64>,
}

impl ElementParams {
    pub fn k(k: f64) -> Self {
        Self { k: Some(k), ..Self::default() }
    }
    pub fn kt(k: f64, t: f64) -> Self {
        Self { k: Some(k), t: Some(t), xi: None }
    }
    pub fn t(t: f64) -> Self {
        Self { t: Some(t), ..Self::default() }
    }
}

/// One first- or second-order building block, stored in canonical form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Factor {
    /// `k`
    P { k: f64 },
    /// `ki / s`
    I { ki: f64 },
    /// `k·T s / (T/N s + 1)`
    D { k: f64, t: f64 },
    /// `kp + ki / s`
    PI { kp: f64, ki: f64 },
    /// `k (T s + 1) / (T/N s + 1)`
    PD { k: f64, t: f64 },
    /// `k / (T s + 1)`
    IF { k: f64, t: f64 },
    /// `k / (T² s² + 2 T ξ s + 1)`
    O { k: f64, t: f64, xi: f64 },
}

impl Factor {
    pub fn kind(&self) -> ElementKind {
        match self {
            Factor::P { .. } => ElementKind::P,
            Factor::I { .. } => ElementKind::I,
            Factor::D { .. } => ElementKind::D,
            Factor::PI { .. } => ElementKind::PI,
            Factor::PD { .. } => ElementKind::PD,
            Factor::IF { .. } => ElementKind::IF,
            Factor::O { .. } => ElementKind::O,
        }
    }

    fn validate(&self) -> Result<()> {
        let finite = |v: f64, what: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(GfmError::Element(format!("{what} must be finite")))
            }
        };
        let positive = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(GfmError::Element(format!("{what} must be positive, got {v}")))
            }
        };
        match *self {
            Factor::P { k } => finite(k, "k"),
            Factor::I { ki } => finite(ki, "ki"),
            Factor::PI { kp, ki } => finite(kp, "kp").and(finite(ki, "ki")),
            Factor::D { k, t } | Factor::PD { k, t } | Factor::IF { k, t } => finite(k, "k").and(positive(t, "T")),
            Factor::O { k, t, xi } => finite(k, "k").and(positive(t, "T")).and(positive(xi, "xi")),
        }
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        let one = Complex64::new(1.0, 0.0);
        let n = DERIVATIVE_BANDLIMIT;
        match *self {
            Factor::P { k } => k * one,
            Factor::I { ki } => ki / s,
            Factor::D { k, t } => k * t * s / (t / n * s + 1.0),
            Factor::PI { kp, ki } => kp + ki / s,
            Factor::PD { k, t } => k * (t * s + 1.0) / (t / n * s + 1.0),
            Factor::IF { k, t } => k / (t * s + 1.0),
            Factor::O { k, t, xi } => k / (t * t * s * s + 2.0 * t * xi * s + 1.0),
        }
    }

    pub fn has_integrator(&self) -> bool {
        matches!(*self, Factor::I { ki } if ki != 0.0) || matches!(*self, Factor::PI { ki, .. } if ki != 0.0)
    }

    pub fn is_strictly_proper(&self) -> bool {
        match *self {
            Factor::P { k } => k == 0.0,
            Factor::I { .. } | Factor::IF { .. } | Factor::O { .. } => true,
            Factor::PI { kp, .. } => kp == 0.0,
            Factor::D { k, .. } | Factor::PD { k, .. } => k == 0.0,
        }
    }

    pub fn realize(&self) -> Result<StateSpaceModel> {
        let n = DERIVATIVE_BANDLIMIT;
        match *self {
            Factor::P { k } => StateSpaceModel::from_tf(&[k], &[1.0]),
            Factor::I { ki } => StateSpaceModel::from_tf(&[ki], &[1.0, 0.0]),
            Factor::D { k, t } => StateSpaceModel::from_tf(&[k * t, 0.0], &[t / n, 1.0]),
            Factor::PI { kp, ki } => StateSpaceModel::from_tf(&[kp, ki], &[1.0, 0.0]),
            Factor::PD { k, t } => StateSpaceModel::from_tf(&[k * t, k], &[t / n, 1.0]),
            Factor::IF { k, t } => StateSpaceModel::from_tf(&[k], &[t, 1.0]),
            Factor::O { k, t, xi } => StateSpaceModel::from_tf(&[k], &[t * t, 2.0 * t * xi, 1.0]),
        }
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Factor::P { k } => write!(f, "P(k={k})"),
            Factor::I { ki } => write!(f, "I(ki={ki})"),
            Factor::D { k, t } => write!(f, "D(k={k},T={t})"),
            Factor::PI { kp, ki } => write!(f, "PI(kp={kp},ki={ki})"),
            Factor::PD { k, t } => write!(f, "PD(k={k},T={t})"),
            Factor::IF { k, t } => write!(f, "IF(k={k},T={t})"),
            Factor::O { k, t, xi } => write!(f, "O(k={k},T={t},xi={xi})"),
        }
    }
}

/// Entry `φij` of the control transfer matrix. An empty factor list is the
/// zero element.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Element {
    pub factors: Vec<Factor>,
    /// Extra factors applied to the measured signal only.
    pub feedback_only: Option<Box<Element>>,
}

/// Builds a single-factor element from vocabulary parameters. Missing `k`
/// defaults to 1 for every kind; `T` is required where the kind has one.
pub fn make_element(kind: ElementKind, params: ElementParams) -> Result<Element> {
    let k = params.k.unwrap_or(1.0);
    let need_t = || params.t.ok_or_else(|| GfmError::Element(format!("{kind:?} requires T")));
    let factor = match kind {
        ElementKind::Zero => return Ok(Element::zero()),
        ElementKind::P => Factor::P { k: params.k.ok_or_else(|| GfmError::Element("P requires k".into()))? },
        ElementKind::I => {
            let t = need_t()?;
            if !(t > 0.0) {
                return Err(GfmError::Element(format!("T must be positive, got {t}")));
            }
            Factor::I { ki: k / t }
        }
        ElementKind::PI => {
            let t = need_t()?;
            if !(t > 0.0) {
                return Err(GfmError::Element(format!("T must be positive, got {t}")));
            }
            Factor::PI { kp: k, ki: k / t }
        }
        ElementKind::D => Factor::D { k, t: need_t()? },
        ElementKind::PD => Factor::PD { k, t: need_t()? },
        ElementKind::IF => Factor::IF { k, t: need_t()? },
        ElementKind::O => Factor::O {
            k,
            t: need_t()?,
            xi: params.xi.ok_or_else(|| GfmError::Element("O requires xi".into()))?,
        },
    };
    Element::from_factors(vec![factor])
}

impl Element {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_factors(factors: Vec<Factor>) -> Result<Self> {
        for f in &factors {
            f.validate()?;
        }
        Ok(Self { factors, feedback_only: None })
    }

    pub fn gain(k: f64) -> Self {
        Self { factors: vec![Factor::P { k }], feedback_only: None }
    }

    pub fn integral(ki: f64) -> Self {
        Self { factors: vec![Factor::I { ki }], feedback_only: None }
    }

    pub fn pi(kp: f64, ki: f64) -> Self {
        Self { factors: vec![Factor::PI { kp, ki }], feedback_only: None }
    }

    /// `k / (T s + 1)`
    pub fn inertia(k: f64, t: f64) -> Result<Self> {
        Self::from_factors(vec![Factor::IF { k, t }])
    }

    /// Product of two elements (the feedback-only part of `self` is kept).
    pub fn times(mut self, other: Element) -> Self {
        self.factors.extend(other.factors);
        self
    }

    pub fn with_feedback_only(mut self, fb: Element) -> Self {
        self.feedback_only = Some(Box::new(fb));
        self
    }

    pub fn is_zero(&self) -> bool {
        self.factors.is_empty() || self.factors.iter().any(|f| matches!(f, Factor::P { k } if *k == 0.0))
    }

    /// Transfer from the reference to the element output.
    pub fn eval(&self, s: Complex64) -> Complex64 {
        if self.is_zero() {
            return Complex64::new(0.0, 0.0);
        }
        self.factors.iter().fold(Complex64::new(1.0, 0.0), |acc, f| acc * f.eval(s))
    }

    /// Transfer from the measured signal to the element output (sign of the
    /// error not included).
    pub fn eval_feedback(&self, s: Complex64) -> Complex64 {
        match &self.feedback_only {
            Some(fb) => self.eval(s) * fb.eval(s),
            None => self.eval(s),
        }
    }

    pub fn has_integrator(&self) -> bool {
        !self.is_zero() && self.factors.iter().any(Factor::has_integrator)
    }

    /// Gain at `s = 0`; `±inf` when the element integrates.
    pub fn dc_gain(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let mut g = 1.0;
        let mut integrating = false;
        for f in &self.factors {
            match *f {
                Factor::I { ki } => {
                    integrating |= ki != 0.0;
                    g *= ki;
                }
                Factor::PI { kp, ki } => {
                    if ki != 0.0 {
                        integrating = true;
                        g *= ki;
                    } else {
                        g *= kp;
                    }
                }
                Factor::D { .. } => g = 0.0,
                Factor::P { k } | Factor::PD { k, .. } | Factor::IF { k, .. } | Factor::O { k, .. } => g *= k,
            }
        }
        if integrating && g != 0.0 {
            g.signum() * f64::INFINITY
        } else {
            g
        }
    }

    pub fn is_strictly_proper(&self) -> bool {
        self.is_zero() || self.factors.iter().any(Factor::is_strictly_proper)
    }

    /// SISO realization of the reference path.
    pub fn realize(&self) -> Result<StateSpaceModel> {
        if self.is_zero() {
            return StateSpaceModel::from_tf(&[0.0], &[1.0]);
        }
        let mut sys = self.factors[0].realize()?;
        for f in &self.factors[1..] {
            sys = series(&sys, &f.realize()?)?;
        }
        Ok(sys)
    }

    pub fn parse(text: &str) -> Result<Self> {
        parse_element(text)
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        for (i, factor) in self.factors.iter().enumerate() {
            if i > 0 {
                write!(f, "*")?;
            }
            write!(f, "{factor}")?;
        }
        if let Some(fb) = &self.feedback_only {
            write!(f, "{{{fb}}}")?;
        }
        Ok(())
    }
}

fn parse_factor(text: &str) -> Result<Factor> {
    let text = text.trim();
    let open = text.find('(').ok_or_else(|| GfmError::Parse(format!("expected `(` in `{text}`")))?;
    if !text.ends_with(')') {
        return Err(GfmError::Parse(format!("expected `)` at end of `{text}`")));
    }
    let name = text[..open].trim();
    let mut k = None;
    let mut kp = None;
    let mut ki = None;
    let mut t = None;
    let mut xi = None;
    for item in text[open + 1..text.len() - 1].split(',').filter(|s| !s.trim().is_empty()) {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| GfmError::Parse(format!("expected key=value, got `{item}`")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| GfmError::Parse(format!("bad number `{}`", value.trim())))?;
        let slot = match key.trim() {
            "k" => &mut k,
            "kp" => &mut kp,
            "ki" => &mut ki,
            "T" | "t" => &mut t,
            "xi" => &mut xi,
            other => return Err(GfmError::Parse(format!("unknown parameter `{other}`"))),
        };
        *slot = Some(value);
    }
    let kind = match name {
        "P" => ElementKind::P,
        "I" => ElementKind::I,
        "D" => ElementKind::D,
        "PI" => ElementKind::PI,
        "PD" => ElementKind::PD,
        "IF" => ElementKind::IF,
        "O" => ElementKind::O,
        other => return Err(GfmError::Parse(format!("unknown element kind `{other}`"))),
    };
    // canonical coefficients take precedence over the (k, T) form
    let factor = match (kind, kp, ki) {
        (ElementKind::I, _, Some(ki)) => Factor::I { ki },
        (ElementKind::PI, Some(kp), Some(ki)) => Factor::PI { kp, ki },
        _ => {
            let el = make_element(kind, ElementParams { k, t, xi })?;
            el.factors[0]
        }
    };
    factor.validate()?;
    Ok(factor)
}

fn parse_chain(text: &str) -> Result<Element> {
    let factors = text
        .split('*')
        .map(parse_factor)
        .collect::<Result<Vec<_>>>()?;
    Element::from_factors(factors)
}

fn parse_element(text: &str) -> Result<Element> {
    let text = text.trim();
    if text == "0" || text.is_empty() {
        return Ok(Element::zero());
    }
    match text.find('{') {
        Some(open) => {
            if !text.ends_with('}') {
                return Err(GfmError::Parse(format!("unterminated feedback-only term in `{text}`")));
            }
            let main = parse_chain(&text[..open])?;
            let fb = parse_chain(&text[open + 1..text.len() - 1])?;
            Ok(main.with_feedback_only(fb))
        }
        None => parse_chain(text),
    }
}
