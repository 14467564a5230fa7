use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{GfmError, Result};
use crate::linsys::StateSpaceModel;

/// Numbers parameterizing the six weighting functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightNumbers {
    pub s11_1: f64,
    pub s11_2: f64,
    pub t21_1: f64,
    pub t21_2: f64,
    pub kw22: f64,
    pub t22_1: f64,
    pub t22_2: f64,
    pub kw31: f64,
    pub t31_2: f64,
    pub t32_1: f64,
    pub t32_2: f64,
    pub s41_1: f64,
    pub s41_2: f64,
}

impl Default for WeightNumbers {
    fn default() -> Self {
        Self {
            s11_1: 4.0,
            s11_2: 0.0004,
            t21_1: 1.447e-3,
            t21_2: 1.447e-5,
            kw22: 100.0,
            t22_1: 1.447e-3,
            t22_2: 1.447e-5,
            kw31: 0.015,
            t31_2: 1.447e-5,
            t32_1: 1.447e-3,
            t32_2: 1.447e-5,
            s41_1: 60.0,
            s41_2: 0.006,
        }
    }
}

impl WeightNumbers {
    fn values(&self) -> [(&'static str, f64); 13] {
        [
            ("s11_1", self.s11_1),
            ("s11_2", self.s11_2),
            ("T21_1", self.t21_1),
            ("T21_2", self.t21_2),
            ("kw22", self.kw22),
            ("T22_1", self.t22_1),
            ("T22_2", self.t22_2),
            ("kw31", self.kw31),
            ("T31_2", self.t31_2),
            ("T32_1", self.t32_1),
            ("T32_2", self.t32_2),
            ("s41_1", self.s41_1),
            ("s41_2", self.s41_2),
        ]
    }
}

/// SISO rational weight, coefficients in descending powers of `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct Weight {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
}

fn polyval(c: &[f64], s: Complex64) -> Complex64 {
    c.iter().fold(Complex64::new(0.0, 0.0), |acc, &k| acc * s + k)
}

fn conv(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

impl Weight {
    pub fn eval(&self, s: Complex64) -> Complex64 {
        polyval(&self.num, s) / polyval(&self.den, s)
    }

    /// Gain for `s → ∞` (weights are proper).
    pub fn high_frequency_gain(&self) -> f64 {
        if self.num.len() < self.den.len() {
            0.0
        } else {
            self.num[0] / self.den[0]
        }
    }

    pub fn realize(&self) -> Result<StateSpaceModel> {
        StateSpaceModel::from_tf(&self.num, &self.den)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet {
    pub w11: Weight,
    pub w21: Weight,
    pub w22: Weight,
    pub w31: Weight,
    pub w32: Weight,
    pub w41: Weight,
}

impl WeightSet {
    /// Weights in channel order `11, 21, 22, 31, 32, 41`.
    pub fn as_array(&self) -> [&Weight; 6] {
        [&self.w11, &self.w21, &self.w22, &self.w31, &self.w32, &self.w41]
    }
}

impl Default for WeightSet {
    fn default() -> Self {
        make_weights(&WeightNumbers::default()).expect("default weight numbers are valid")
    }
}

pub fn make_weights(n: &WeightNumbers) -> Result<WeightSet> {
    for (name, v) in n.values() {
        if !(v > 0.0 && v.is_finite()) {
            return Err(GfmError::Domain(format!("weight number {name} must be positive, got {v}")));
        }
    }
    let lead = |t1: f64, t2: f64| (vec![t1, 1.0], vec![t2, 1.0]);
    let (l21n, l21d) = lead(n.t21_1, n.t21_2);
    Ok(WeightSet {
        w11: Weight { num: vec![1.0, n.s11_1], den: vec![1.0, n.s11_2] },
        w21: Weight { num: conv(&l21n, &l21n), den: conv(&l21d, &l21d) },
        w22: Weight { num: vec![n.t22_1 / n.kw22, 1.0 / n.kw22], den: vec![n.t22_2, 1.0] },
        w31: Weight { num: vec![1.0 / n.kw31, 0.0], den: vec![n.t31_2, 1.0] },
        w32: Weight { num: vec![n.t32_1, 1.0], den: vec![n.t32_2, 1.0] },
        w41: Weight { num: vec![1.0, n.s41_1], den: vec![1.0, n.s41_2] },
    })
}
