use nalgebra::DMatrix;
use num_complex::Complex64;

use super::StateSpaceModel;
use crate::error::{GfmError, Result};

/// `C (jωI − A)^-1 B + D`.
pub fn freq_response(sys: &StateSpaceModel, omega: f64) -> Result<DMatrix<Complex64>> {
    let n = sys.nstates();
    let d = sys.d().map(|v| Complex64::new(v, 0.0));
    if n == 0 {
        return Ok(d);
    }
    let jw = Complex64::new(0.0, omega);
    let resolvent = DMatrix::from_fn(n, n, |i, j| {
        let a = Complex64::new(-sys.a()[(i, j)], 0.0);
        if i == j {
            a + jw
        } else {
            a
        }
    });
    let scale = resolvent.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1.0);
    let lu = resolvent.lu();
    let udiag_min = (0..n).map(|i| lu.u()[(i, i)].norm()).fold(f64::INFINITY, f64::min);
    if udiag_min <= 1e-12 * scale {
        return Err(GfmError::PoleOnAxis { omega });
    }
    let b = sys.b().map(|v| Complex64::new(v, 0.0));
    let x = lu.solve(&b).ok_or(GfmError::PoleOnAxis { omega })?;
    let c = sys.c().map(|v| Complex64::new(v, 0.0));
    Ok(c * x + d)
}

/// Largest singular value of a complex matrix.
pub fn sigma_max(m: &DMatrix<Complex64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    if m.nrows() == 1 || m.ncols() == 1 {
        return m.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    }
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

pub fn sigma_max_at(sys: &StateSpaceModel, omega: f64) -> Result<f64> {
    Ok(sigma_max(&freq_response(sys, omega)?))
}

/// `points_per_decade` log-spaced frequencies covering `[lo, hi]` inclusive.
pub fn log_grid(lo: f64, hi: f64, points_per_decade: usize) -> Vec<f64> {
    let decades = (hi / lo).log10();
    let count = (decades * points_per_decade as f64).ceil() as usize + 1;
    (0..count)
        .map(|k| lo * 10f64.powf(decades * k as f64 / (count - 1) as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linsys::{series, StateSpaceModel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn first_order_dc_and_corner() {
        let g = StateSpaceModel::from_tf(&[1.0], &[1.0, 1.0]).unwrap();
        let dc = freq_response(&g, 0.0).unwrap()[(0, 0)];
        assert!((dc - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        let corner = freq_response(&g, 1.0).unwrap()[(0, 0)].norm();
        assert!((corner - 1.0 / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn pole_on_axis_is_reported() {
        let integrator = StateSpaceModel::from_tf(&[1.0], &[1.0, 0.0]).unwrap();
        assert!(matches!(freq_response(&integrator, 0.0), Err(GfmError::PoleOnAxis { .. })));
        let osc = StateSpaceModel::from_tf(&[1.0], &[1.0, 0.0, 4.0]).unwrap();
        assert!(matches!(freq_response(&osc, 2.0), Err(GfmError::PoleOnAxis { .. })));
        assert!(freq_response(&osc, 1.0).is_ok());
    }

    fn random_stable(rng: &mut ChaCha8Rng, n: usize, m: usize, p: usize) -> StateSpaceModel {
        let mut a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        for i in 0..n {
            a[(i, i)] -= n as f64 + 1.0;
        }
        let b = DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
        let c = DMatrix::from_fn(p, n, |_, _| rng.random_range(-1.0..1.0));
        let d = DMatrix::from_fn(p, m, |_, _| rng.random_range(-1.0..1.0));
        StateSpaceModel::from_matrices(a, b, c, d).unwrap()
    }

    #[test]
    fn series_response_is_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let g1 = random_stable(&mut rng, 3, 2, 2);
            let g2 = random_stable(&mut rng, 4, 2, 3);
            let g = series(&g1, &g2).unwrap();
            assert_eq!(g.nstates(), 7);
            for _ in 0..20 {
                let w = 10f64.powf(rng.random_range(-3.0..3.0));
                let lhs = freq_response(&g, w).unwrap();
                let rhs = freq_response(&g2, w).unwrap() * freq_response(&g1, w).unwrap();
                assert!((lhs - &rhs).norm() <= 1e-9 * rhs.norm().max(1.0));
            }
        }
    }

    #[test]
    fn grid_endpoints() {
        let g = log_grid(1e-4, 1e6, 400);
        assert_eq!(g.len(), 4001);
        assert!((g[0] - 1e-4).abs() < 1e-18);
        assert!((g[g.len() - 1] / 1e6 - 1.0).abs() < 1e-12);
    }
}
