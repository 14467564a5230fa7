//! Nelder–Mead simplex search with dimension-adapted coefficients.

use rayon::prelude::*;

/// Value of a candidate: the quantity minimized plus a payload recorded in
/// the history (here the stability margin).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scored {
    pub value: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    pub max_iters: usize,
    /// Stop once the spread of vertex values is below `tol·max(|f_best|, 1e-12)`.
    pub tol: f64,
}

pub struct SimplexOutcome {
    pub x: Vec<f64>,
    pub best: Scored,
    pub iterations: usize,
    pub evaluations: usize,
}

fn less(a: &Scored, b: &Scored) -> bool {
    a.value.total_cmp(&b.value).is_lt()
}

/// Minimizes `f` from `x0`, calling `trace(iteration, best)` after every
/// iteration. The best value is non-increasing.
pub fn nelder_mead<F>(
    f: &F,
    x0: &[f64],
    steps: &[f64],
    opts: SimplexOptions,
    trace: &mut dyn FnMut(usize, &Scored),
) -> SimplexOutcome
where
    F: Fn(&[f64]) -> Scored + Sync,
{
    let n = x0.len();
    let nf = n as f64;
    let (alpha, gamma, rho, sigma) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);

    let mut pts: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += steps[i];
        pts.push(p);
    }
    let mut vals: Vec<Scored> = pts.par_iter().map(|p| f(p)).collect();
    let mut evaluations = n + 1;
    let mut iterations = 0;

    let order = |pts: &mut Vec<Vec<f64>>, vals: &mut Vec<Scored>| {
        // stable sort keeps the incumbent first on ties
        let mut idx: Vec<usize> = (0..pts.len()).collect();
        idx.sort_by(|&a, &b| vals[a].value.total_cmp(&vals[b].value));
        *pts = idx.iter().map(|&i| pts[i].clone()).collect();
        *vals = idx.iter().map(|&i| vals[i]).collect();
    };
    order(&mut pts, &mut vals);

    while iterations < opts.max_iters {
        let spread = vals[n].value - vals[0].value;
        if vals[0].value.is_finite() && spread.is_finite() && spread <= opts.tol * vals[0].value.abs().max(1e-12) {
            break;
        }
        iterations += 1;
        let centroid: Vec<f64> = (0..n).map(|j| pts[..n].iter().map(|p| p[j]).sum::<f64>() / nf).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|j| centroid[j] + t * (pts[n][j] - centroid[j])).collect() };
        let r_pt = along(-alpha);
        let r = f(&r_pt);
        evaluations += 1;
        let replace = if less(&r, &vals[0]) {
            let e_pt = along(-alpha * gamma);
            let e = f(&e_pt);
            evaluations += 1;
            Some(if less(&e, &r) { (e_pt, e) } else { (r_pt, r) })
        } else if less(&r, &vals[n - 1]) {
            Some((r_pt, r))
        } else {
            let outside = less(&r, &vals[n]);
            let c_pt = if outside { along(-alpha * rho) } else { along(rho) };
            let c = f(&c_pt);
            evaluations += 1;
            let accept = if outside { !less(&r, &c) } else { less(&c, &vals[n]) };
            accept.then_some((c_pt, c))
        };
        match replace {
            Some((p, v)) => {
                pts[n] = p;
                vals[n] = v;
            }
            None => {
                let best = pts[0].clone();
                for p in pts.iter_mut().skip(1) {
                    for j in 0..n {
                        p[j] = best[j] + sigma * (p[j] - best[j]);
                    }
                }
                let shrunk: Vec<Scored> = pts[1..].par_iter().map(|p| f(p)).collect();
                vals[1..].copy_from_slice(&shrunk);
                evaluations += n;
            }
        }
        order(&mut pts, &mut vals);
        trace(iterations, &vals[0]);
    }
    SimplexOutcome { x: pts[0].clone(), best: vals[0], iterations, evaluations }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> Scored {
        let v = (0..x.len() - 1)
            .map(|i| 100.0 * (x[i + 1] - x[i] * x[i]).powi(2) + (1.0 - x[i]).powi(2))
            .sum();
        Scored { value: v, margin: 0.0 }
    }

    #[test]
    fn finds_rosenbrock_minimum() {
        let opts = SimplexOptions { max_iters: 20000, tol: 1e-14 };
        let mut last = f64::INFINITY;
        let out = nelder_mead(&rosenbrock, &[-1.2, 1.0], &[0.1, 0.1], opts, &mut |_, s| {
            assert!(s.value <= last);
            last = s.value;
        });
        assert!((out.x[0] - 1.0).abs() < 1e-4 && (out.x[1] - 1.0).abs() < 1e-4, "{:?}", out.x);
    }

    #[test]
    fn higher_dimensional_quadratic() {
        let f = |x: &[f64]| Scored { value: x.iter().enumerate().map(|(i, v)| (i as f64 + 1.0) * (v - 0.5).powi(2)).sum(), margin: 0.0 };
        let x0 = vec![0.0; 8];
        let out = nelder_mead(&f, &x0, &[0.2; 8], SimplexOptions { max_iters: 20000, tol: 1e-16 }, &mut |_, _| {});
        assert!(out.best.value < 1e-8, "{}", out.best.value);
    }

    #[test]
    fn zero_iterations_returns_start() {
        let out = nelder_mead(&rosenbrock, &[-1.2, 1.0], &[0.1, 0.1], SimplexOptions { max_iters: 0, tol: 0.0 }, &mut |_, _| {});
        assert_eq!(out.iterations, 0);
        assert!(out.best.value <= rosenbrock(&[-1.2, 1.0]).value);
    }

    #[test]
    fn infinite_values_are_avoided() {
        let f = |x: &[f64]| Scored { value: if x[0] <= 0.0 { f64::INFINITY } else { (x[0] - 2.0).powi(2) + x[1] * x[1] }, margin: 0.0 };
        let out = nelder_mead(&f, &[0.5, 0.3], &[0.4, 0.4], SimplexOptions { max_iters: 2000, tol: 1e-14 }, &mut |_, _| {});
        assert!((out.x[0] - 2.0).abs() < 1e-4);
    }
}
