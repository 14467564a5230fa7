use nalgebra::DVector;

use crate::error::{GfmError, Result};
use crate::linsys::StateSpaceModel;

/// RK4 response of `sys` from `x0` with the input held over each step at
/// its value at the start of the step. Returns sample times and outputs,
/// one sample every `every` steps.
pub fn simulate_lti(
    sys: &StateSpaceModel,
    x0: &DVector<f64>,
    input: &dyn Fn(f64) -> DVector<f64>,
    dt: f64,
    steps: usize,
    every: usize,
) -> Result<(Vec<f64>, Vec<DVector<f64>>)> {
    if x0.len() != sys.nstates() {
        return Err(GfmError::Dimension(format!("x0 has {} entries for {} states", x0.len(), sys.nstates())));
    }
    let every = every.max(1);
    let (a, b, c, d) = (sys.a(), sys.b(), sys.c(), sys.d());
    let f = |x: &DVector<f64>, u: &DVector<f64>| a * x + b * u;
    let mut x = x0.clone();
    let (mut t, mut y) = (Vec::new(), Vec::new());
    for k in 0..=steps {
        let tk = k as f64 * dt;
        let u = input(tk);
        if u.len() != sys.ninputs() {
            return Err(GfmError::Dimension(format!("input has {} entries for {} inputs", u.len(), sys.ninputs())));
        }
        if k % every == 0 {
            t.push(tk);
            y.push(c * &x + d * &u);
        }
        if k == steps {
            break;
        }
        let k1 = f(&x, &u);
        let k2 = f(&(&x + &k1 * (0.5 * dt)), &u);
        let k3 = f(&(&x + &k2 * (0.5 * dt)), &u);
        let k4 = f(&(&x + &k3 * dt), &u);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    }
    Ok((t, y))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_order_step() {
        let sys = StateSpaceModel::from_tf(&[1.0], &[1.0, 1.0]).unwrap();
        let (t, y) = simulate_lti(&sys, &DVector::zeros(1), &|_| DVector::from_element(1, 1.0), 1e-3, 3000, 10).unwrap();
        for (t, y) in t.iter().zip(&y) {
            assert!((y[0] - (1.0 - (-t).exp())).abs() < 1e-10);
        }
    }
}
