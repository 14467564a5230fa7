//! H-infinity norm of a stable continuous-time system.
//!
//! The primary route is bisection on `γ`: `γ` lies below the norm iff the
//! Hamiltonian `H(γ)` has an eigenvalue on the imaginary axis. Candidate
//! crossing frequencies are verified by evaluating the frequency response,
//! so every lower-bound update is backed by an actual `σ_max(G(jω))`.
//!
//! [`hinf_norm_grid`] is an independent dense frequency sweep with local
//! golden-section refinement, used as an oracle in tests.

use nalgebra::DMatrix;

use super::eig::{balance, eigenvalues};
use super::freq::{log_grid, sigma_max, sigma_max_at};
use super::StateSpaceModel;
use crate::error::{GfmError, Result};

const SCAN_LO: f64 = 1e-4;
const SCAN_HI: f64 = 1e6;
const BRACKET_POINTS_PER_DECADE: usize = 12;
const MAX_BISECTIONS: usize = 200;
const MAX_LEVEL_STEPS: usize = 20;

fn balanced(sys: &StateSpaceModel) -> StateSpaceModel {
    let t = balance(sys.a());
    sys.scale_states(&t)
}

fn check_stable(sys: &StateSpaceModel) -> Result<()> {
    let abscissa = eigenvalues(sys.a())?.abscissa();
    if sys.nstates() > 0 && abscissa >= 0.0 {
        return Err(GfmError::Unstable { max_real_part: abscissa });
    }
    Ok(())
}

fn sigma_d(sys: &StateSpaceModel) -> f64 {
    sigma_max(&sys.d().map(|v| num_complex::Complex64::new(v, 0.0)))
}

/// Frequencies worth probing: coarse log grid, zero, and the natural
/// frequencies/imaginary parts of the poles.
fn probe_frequencies(sys: &StateSpaceModel, points_per_decade: usize) -> Result<Vec<f64>> {
    let mut freqs = vec![0.0];
    freqs.extend(log_grid(SCAN_LO, SCAN_HI, points_per_decade));
    for l in eigenvalues(sys.a())?.eigenvalues {
        if l.im.abs() > 0.0 {
            freqs.push(l.im.abs());
            freqs.push(l.norm());
        }
    }
    Ok(freqs)
}

fn max_over(sys: &StateSpaceModel, freqs: &[f64]) -> Result<(f64, f64)> {
    let mut best = (0.0, 0.0);
    for &w in freqs {
        let s = sigma_max_at(sys, w)?;
        if s > best.0 {
            best = (s, w);
        }
    }
    Ok(best)
}

/// Hamiltonian whose imaginary-axis eigenvalues `jω` are the frequencies
/// where `γ` is a singular value of `G(jω)`. Requires `γ > σ_max(D)`.
fn hamiltonian(sys: &StateSpaceModel, gamma: f64) -> Option<DMatrix<f64>> {
    let (a, b, c, d) = (sys.a(), sys.b(), sys.c(), sys.d());
    let n = a.nrows();
    let (p, m) = d.shape();
    let g2 = gamma * gamma;
    let r = d.transpose() * d - DMatrix::identity(m, m) * g2;
    let s = d * d.transpose() - DMatrix::identity(p, p) * g2;
    let r_inv = r.try_inverse()?;
    let s_inv = s.try_inverse()?;
    let h11 = a - b * &r_inv * d.transpose() * c;
    let h12 = -(b * &r_inv * b.transpose()) * gamma;
    let h21 = c.transpose() * &s_inv * c * gamma;
    let h22 = -a.transpose() + c.transpose() * d * &r_inv * b.transpose();
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&h11);
    h.view_mut((0, n), (n, n)).copy_from(&h12);
    h.view_mut((n, 0), (n, n)).copy_from(&h21);
    h.view_mut((n, n), (n, n)).copy_from(&h22);
    Some(h)
}

/// Probes `γ`: returns the largest verified `σ_max` at candidate
/// crossing frequencies (and their midpoints), or `None` when `H(γ)` has no
/// imaginary-axis eigenvalue.
fn crossing_probe(sys: &StateSpaceModel, gamma: f64) -> Result<Option<f64>> {
    let h = match hamiltonian(sys, gamma) {
        Some(h) => h,
        None => return Ok(Some(gamma)),
    };
    let spec = eigenvalues(&h)?;
    let hnorm = h.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let mut cands: Vec<f64> = spec
        .eigenvalues
        .iter()
        .filter(|l| l.re.abs() <= 1e-6 * l.norm() + 1e-12 * hnorm)
        .map(|l| l.im.abs())
        .collect();
    if cands.is_empty() {
        return Ok(None);
    }
    cands.sort_by(|x, y| x.total_cmp(y));
    cands.dedup_by(|x, y| (*x - *y).abs() <= 1e-12 * y.abs().max(1.0));
    let mut probes = cands.clone();
    for pair in cands.windows(2) {
        probes.push(0.5 * (pair[0] + pair[1]));
        probes.push((pair[0] * pair[1]).sqrt());
    }
    let mut best: f64 = 0.0;
    for w in probes {
        best = best.max(sigma_max_at(sys, w)?);
    }
    Ok(Some(best))
}

/// H-infinity norm with relative accuracy `tol` by Hamiltonian bisection.
pub fn hinf_norm(sys: &StateSpaceModel, tol: f64) -> Result<f64> {
    if !(tol > 0.0 && tol <= 0.1) {
        return Err(GfmError::Domain(format!("hinf_norm tolerance {tol} outside (0, 0.1]")));
    }
    check_stable(sys)?;
    let sd = sigma_d(sys);
    if sys.nstates() == 0 || sys.ninputs() == 0 || sys.noutputs() == 0 {
        return Ok(sd);
    }
    let sys = balanced(sys);
    let (peak, _) = max_over(&sys, &probe_frequencies(&sys, BRACKET_POINTS_PER_DECADE)?)?;
    if peak == 0.0 && sd == 0.0 {
        return Ok(0.0);
    }
    // the scanned peak is an attained value, hence a valid lower bound
    let mut lo = sd.max(peak);
    // level-set steps: crossings at γ just above `lo` locate larger peaks
    for _ in 0..MAX_LEVEL_STEPS {
        let g = lo * (1.0 + 2.0 * tol);
        match crossing_probe(&sys, g)? {
            Some(s) if s >= g * (1.0 - 1e-9) => lo = s.max(g),
            _ => return Ok(0.5 * (lo + g)),
        }
    }
    let mut hi = (2.0 * lo).max(lo * (1.0 + 4.0 * tol));
    let mut expansions = 0;
    while let Some(s) = crossing_probe(&sys, hi)?.filter(|s| *s >= hi * (1.0 - 1e-9)) {
        lo = lo.max(s);
        hi *= 10.0;
        expansions += 1;
        if expansions > 30 {
            return Err(GfmError::Domain("hinf_norm: no valid upper bound found".into()));
        }
    }
    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= 2.0 * tol * lo {
            break;
        }
        let mid = 0.5 * (lo + hi);
        match crossing_probe(&sys, mid)? {
            Some(s) if s >= mid * (1.0 - 1e-9) => lo = lo.max(s).max(mid),
            Some(s) => {
                lo = lo.max(s);
                hi = mid;
            }
            None => hi = mid,
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Result of the dense frequency-sweep oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPeak {
    pub gamma: f64,
    pub omega: f64,
}

/// Independent H-infinity estimate: `points_per_decade` log-spaced points
/// over `[1e-4, 1e6]` rad/s plus `ω = 0`, followed by golden-section
/// refinement around the largest local maxima.
pub fn hinf_norm_grid(sys: &StateSpaceModel, points_per_decade: usize) -> Result<GridPeak> {
    check_stable(sys)?;
    let sys = &balanced(sys);
    let mut freqs = vec![0.0];
    freqs.extend(log_grid(SCAN_LO, SCAN_HI, points_per_decade));
    let vals: Vec<f64> = freqs.iter().map(|&w| sigma_max_at(sys, w)).collect::<Result<_>>()?;
    let mut best = GridPeak { gamma: sigma_d(sys), omega: f64::INFINITY };
    for (i, (&w, &v)) in freqs.iter().zip(&vals).enumerate() {
        if v > best.gamma {
            best = GridPeak { gamma: v, omega: w };
        }
        let left = if i > 0 { vals[i - 1] } else { f64::NEG_INFINITY };
        let right = vals.get(i + 1).copied().unwrap_or(f64::NEG_INFINITY);
        if v > left && v >= right && i > 0 && i + 1 < freqs.len() {
            let refined = golden_max(sys, freqs[i - 1], freqs[i + 1])?;
            if refined.gamma > best.gamma {
                best = refined;
            }
        }
    }
    Ok(best)
}

fn golden_max(sys: &StateSpaceModel, mut a: f64, mut b: f64) -> Result<GridPeak> {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    // search in log frequency
    let (mut la, mut lb) = (a.max(1e-300).ln(), b.ln());
    let mut x1 = lb - ratio * (lb - la);
    let mut x2 = la + ratio * (lb - la);
    let mut f1 = sigma_max_at(sys, x1.exp())?;
    let mut f2 = sigma_max_at(sys, x2.exp())?;
    for _ in 0..60 {
        if f1 < f2 {
            la = x1;
            x1 = x2;
            f1 = f2;
            x2 = la + ratio * (lb - la);
            f2 = sigma_max_at(sys, x2.exp())?;
        } else {
            lb = x2;
            x2 = x1;
            f2 = f1;
            x1 = lb - ratio * (lb - la);
            f1 = sigma_max_at(sys, x1.exp())?;
        }
    }
    a = la.exp();
    b = lb.exp();
    let w = 0.5 * (a + b);
    Ok(GridPeak { gamma: f1.max(f2).max(sigma_max_at(sys, w)?), omega: w })
}
