//! Acceptance suite: one PASS/FAIL line per criterion.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gfm_core::controllers::{gains_to_phi, preset_with_defaults, realize_phi, GainVector, PhiSpec, Tuning, PRESETS};
use gfm_core::linsys::{hinf_norm, hinf_norm_grid, spectral_abscissa, StateSpaceModel};
use gfm_core::plant::{
    f_dynamics, g_outputs, linearize, solve_equilibrium, ControlInput, ConverterParams, Disturbance, PlantState,
    Setpoints,
};
use gfm_core::simkit::{max_deviation, simulate, to_csv_string, MetricsOutcome, Scenario, SimResult};
use gfm_core::synthesis::{evaluate, synthesize, weighted_channels, SynthesisOptions, SynthesisProblem};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn params() -> ConverterParams {
    ConverterParams::default()
}

fn preset(name: &str) -> PhiSpec {
    preset_with_defaults(name, &params(), &Tuning::new()).unwrap()
}

// ---------------------------------------------------------------- 1

fn central_jacobian(f: &dyn Fn(&[f64]) -> Vec<f64>, at: &[f64]) -> DMatrix<f64> {
    let m = f(at).len();
    let mut jac = DMatrix::zeros(m, at.len());
    for j in 0..at.len() {
        let h = 1e-6 * at[j].abs().max(1.0);
        let (mut up, mut dn) = (at.to_vec(), at.to_vec());
        up[j] += h;
        dn[j] -= h;
        let (fu, fd) = (f(&up), f(&dn));
        for i in 0..m {
            jac[(i, j)] = (fu[i] - fd[i]) / (2.0 * h);
        }
    }
    jac
}

/// Largest entrywise relative error. Entries far below the matrix scale are
/// compared against `1e-6·scale` instead of their own size.
fn rel_err(analytic: &DMatrix<f64>, fd: &DMatrix<f64>) -> f64 {
    let scale = analytic.amax().max(fd.amax()).max(1.0);
    analytic
        .iter()
        .zip(fd.iter())
        .map(|(a, f)| (a - f).abs() / a.abs().max(f.abs()).max(1e-6 * scale))
        .fold(0.0, f64::max)
}

fn criterion_1() -> Outcome {
    let p = params();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let start = Instant::now();
    for _ in 0..5 {
        let x: Vec<f64> = (0..8)
            .map(|i| match i {
                6 => rng.random_range(-1.0..1.0),
                7 => rng.random_range(0.7..1.3),
                _ => rng.random_range(-1.2..1.2),
            })
            .collect();
        let u = [rng.random_range(0.0..1.0), rng.random_range(0.98..1.02), rng.random_range(0.9..1.1)];
        let d = [rng.random_range(0.98..1.02), rng.random_range(0.9..1.1)];
        let lin = linearize(
            &p,
            &PlantState::from_slice(&x),
            &ControlInput::from_slice(&u),
            &Disturbance { omega_g: d[0], vg: d[1] },
        )
        .unwrap();
        // joint vector [x; u; d] for the oracle
        let z: Vec<f64> = x.iter().chain(&u).chain(&d).copied().collect();
        let fx = |z: &[f64]| -> Vec<f64> {
            let dist = Disturbance { omega_g: z[11], vg: z[12] };
            f_dynamics(&PlantState::from_slice(&z[..8]), &ControlInput::from_slice(&z[8..11]), &dist, &p)
                .unwrap()
                .to_array()
                .to_vec()
        };
        let gx = |z: &[f64]| -> Vec<f64> {
            g_outputs(&PlantState::from_slice(&z[..8]), &ControlInput::from_slice(&z[8..11])).to_array().to_vec()
        };
        let jf = central_jacobian(&fx, &z);
        let jg = central_jacobian(&gx, &z);
        let mut ab = DMatrix::zeros(8, 13);
        ab.view_mut((0, 0), (8, 8)).copy_from(lin.a());
        ab.view_mut((0, 8), (8, 5)).copy_from(lin.b());
        let mut cd = DMatrix::zeros(5, 13);
        cd.view_mut((0, 0), (5, 8)).copy_from(lin.c());
        cd.view_mut((0, 8), (5, 5)).copy_from(lin.d());
        worst = worst.max(rel_err(&ab, &jf)).max(rel_err(&cd, &jg));
    }
    let t = start.elapsed();
    outcome(worst <= 1e-5 && t < Duration::from_secs(1), format!("max relative error {worst:.2e}, {t:.2?}"))
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Outcome {
    let p = params();
    let sp = Setpoints::default();
    let d = Disturbance::default();
    let mut pass = true;
    let mut notes = Vec::new();
    for name in PRESETS {
        let ctrl = realize_phi(&preset(name)).unwrap();
        let eq = match solve_equilibrium(&p, &sp, &ctrl, &d, None) {
            Ok(eq) => eq,
            Err(e) => {
                pass = false;
                notes.push(format!("{name}: {e}"));
                continue;
            }
        };
        // independent residual: plant derivative and controller state derivative
        let fx = f_dynamics(&eq.x, &eq.u, &d, &p).unwrap().to_array();
        let mut r = DVector::zeros(10);
        r.rows_mut(0, 5).copy_from_slice(&eq.setpoints.yref.to_array());
        r.rows_mut(5, 5).copy_from_slice(&eq.y.to_array());
        let xi = DVector::from_vec(eq.xi.clone());
        let dxi = ctrl.model.a() * &xi + ctrl.model.b() * &r;
        let resid = fx.iter().chain(dxi.iter()).fold(eq.residual, |m, v| m.max(v.abs()));
        let yr = eq.setpoints.yref;
        let dp = (eq.y.p - sp.yref.p_ref).abs();
        let dw = (eq.u.omega_u - d.omega_g).abs();
        let law = ((yr.q_ref - eq.y.q) + (yr.v_ref - eq.y.v) / p.dq).abs();
        let ok = resid <= 1e-10 && dp <= 1e-8 && dw <= 1e-8 && law <= 1e-8;
        pass &= ok;
        let qnote = if yr.q_ref != sp.yref.q_ref { format!(" (implied Qref {:.4})", yr.q_ref) } else { String::new() };
        notes.push(format!("{name}: residual {resid:.1e}, |p-Pref| {dp:.1e}, |wu-wg| {dw:.1e}, q-V {law:.1e}{qnote}"));
    }
    outcome(pass, notes.join("; "))
}

// ---------------------------------------------------------------- 3

fn oracle_gap(sys: &StateSpaceModel) -> (f64, f64, f64) {
    let h = hinf_norm(sys, 1e-4).unwrap();
    let g = hinf_norm_grid(sys, 200).unwrap().gamma;
    (h, g, (h - g).abs() / g)
}

fn criterion_3() -> Outcome {
    let prob = SynthesisProblem::standard(&params()).unwrap();
    let mut worst: f64 = 0.0;
    for k in [GainVector::initial(), GainVector::reference_optimum()] {
        for ch in weighted_channels(&prob, &k).unwrap() {
            worst = worst.max(oracle_gap(&ch).2);
        }
    }
    let zeta = 0.1;
    let analytic = [
        ("first-order", StateSpaceModel::from_tf(&[1.0], &[1.0, 1.0]).unwrap(), 1.0),
        // bandlimited derivative Ts/(Ts/N + 1), T = 0.01, N = 100
        ("derivative", StateSpaceModel::from_tf(&[0.01, 0.0], &[1e-4, 1.0]).unwrap(), 100.0),
        (
            "resonant",
            StateSpaceModel::from_tf(&[1.0], &[1.0, 2.0 * zeta, 1.0]).unwrap(),
            1.0 / (2.0 * zeta * (1.0 - zeta * zeta as f64).sqrt()),
        ),
    ];
    let mut notes = vec![format!("channels max gap {:.2e}", worst)];
    let mut pass = worst <= 5e-3;
    for (name, sys, exact) in &analytic {
        let (h, g, gap) = oracle_gap(sys);
        let err = (h - exact).abs() / exact;
        pass &= gap <= 5e-3 && err <= 5e-3;
        notes.push(format!("{name} {h:.5} (grid {g:.5}, exact {exact:.5})"));
    }
    outcome(pass, notes.join("; "))
}

// ---------------------------------------------------------------- runs

struct Run {
    label: String,
    scenario: Scenario,
    result: SimResult,
}

fn run(label: &str, spec: &PhiSpec, scenario: &Scenario) -> (Run, Duration) {
    let t = Instant::now();
    let result = simulate(&params(), spec, scenario).unwrap();
    (Run { label: label.into(), scenario: scenario.clone(), result }, t.elapsed())
}

fn p_metrics(r: &Run) -> Option<gfm_core::simkit::Metrics> {
    r.result.metrics[1].available().copied()
}

// ---------------------------------------------------------------- 4

fn criterion_4(runs: &[(Run, Duration)]) -> Outcome {
    let p = params();
    let wg = 0.998;
    let expected = 0.5 + (1.0 - wg) / p.dp;
    let mut pass = true;
    let mut notes = vec![format!("expected {expected:.4}")];
    for (r, t) in runs {
        let ok = match p_metrics(r) {
            Some(m) if r.result.diverged_at.is_none() => {
                notes.push(format!("{} {:.5} in {t:.1?}", r.label, m.steady_state));
                (m.steady_state - expected).abs() <= 5e-3 * expected
            }
            _ => {
                notes.push(format!("{} has no steady state", r.label));
                false
            }
        };
        pass &= ok && *t < Duration::from_secs(30);
    }
    outcome(pass, notes.join("; "))
}

// ---------------------------------------------------------------- 5

fn excursion(r: &SimResult, ch: usize) -> f64 {
    let y = r.output(ch);
    y.iter().map(|v| (v - y[0]).abs()).fold(0.0, f64::max)
}

fn criterion_5(droop_wg: &Run, vsg_wg: &Run, droop_pref: &Run, vsg_pref: &Run) -> Outcome {
    let mut pass = true;
    let mut worst: f64 = 0.0;
    for ch in 0..5 {
        let dev = max_deviation(&droop_wg.result, &vsg_wg.result, ch).unwrap();
        let bound = 5e-3 * excursion(&vsg_wg.result, ch);
        pass &= dev <= bound;
        if bound > 0.0 {
            worst = worst.max(dev / bound);
        }
    }
    let bound = 5e-3 * excursion(&vsg_pref.result, 1);
    let dev = max_deviation(&droop_pref.result, &vsg_pref.result, 1).unwrap();
    pass &= dev > 5.0 * bound;
    outcome(
        pass,
        format!(
            "wg step: worst deviation {:.2}% of the 0.5% bound; Pref step: p deviation {dev:.4} vs 5x bound {:.4}",
            100.0 * worst,
            5.0 * bound
        ),
    )
}

// ---------------------------------------------------------------- 6

fn criterion_6() -> (Outcome, GainVector) {
    let prob = SynthesisProblem::standard(&params()).unwrap();
    let k0 = GainVector::initial();
    let opts = SynthesisOptions::default();
    let start = Instant::now();
    let res = synthesize(&prob, &k0, &opts).unwrap();
    let elapsed = start.elapsed();
    let check = evaluate(&prob, &res.k_opt).unwrap();

    let short = SynthesisOptions { max_iters: 300, ..opts };
    let a = synthesize(&prob, &k0, &short).unwrap();
    let b = synthesize(&prob, &k0, &short).unwrap();
    let deterministic = a.k_opt == b.k_opt && a.history == b.history;

    let pass = res.stable
        && check.stable
        && res.gamma < res.initial_objective
        && deterministic
        && elapsed <= Duration::from_secs(600);
    let detail = format!(
        "objective {:.4} -> {:.4}, abscissa {:.3}, repeatable {deterministic}, {elapsed:.1?}; k_opt {:?}",
        res.initial_objective, res.gamma, check.abscissa, res.k_opt
    );
    (outcome(pass, detail), res.k_opt)
}

// ---------------------------------------------------------------- 7

fn criterion_7(mimo_pref: &Run, vsg_pref: &Run, published_pref: &Run) -> Outcome {
    let (Some(m), Some(v)) = (p_metrics(mimo_pref), p_metrics(vsg_pref)) else {
        return outcome(false, "metrics unavailable");
    };
    let (om, ov) = (m.overshoot.unwrap_or(f64::NAN), v.overshoot.unwrap_or(f64::NAN));
    let better = om < ov && m.settling_time < v.settling_time;

    let p = params();
    let published = preset("mimo-gfm");
    let ctrl = realize_phi(&published).unwrap();
    let eq = solve_equilibrium(&p, &Setpoints::default(), &ctrl, &Disturbance::default(), None).unwrap();
    let lin = linearize(&p, &eq.x, &eq.u, &Disturbance::default()).unwrap();
    let cl = gfm_core::synthesis::closed_loop(&lin, &ctrl.model, p.dq).unwrap();
    let abscissa = spectral_abscissa(cl.a()).unwrap();
    let published_ok = abscissa < 0.0 && published_pref.result.diverged_at.is_none();
    outcome(
        better && published_ok,
        format!(
            "synthesized overshoot {om:.4}, settling {:.3} s; VSG-2 overshoot {ov:.4}, settling {:.3} s; \
             printed MIMO-GFM abscissa {abscissa:.3}, simulated without divergence: {}",
            m.settling_time,
            v.settling_time,
            published_pref.result.diverged_at.is_none()
        ),
    )
}

// ---------------------------------------------------------------- 8

fn metric_values(m: &MetricsOutcome) -> Option<Vec<f64>> {
    m.available().map(|m| vec![m.steady_state, m.overshoot.unwrap_or(0.0), m.settling_time, m.peak])
}

fn criterion_8(runs: &[&Run], specs: &[(&str, &PhiSpec)]) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut pass = true;
    let mut notes = Vec::new();
    for r in runs {
        let spec = specs.iter().find(|(l, _)| *l == r.label).unwrap().1;
        let half = r.scenario.clone().with_dt(r.scenario.dt / 2.0);
        let fine = simulate(&params(), spec, &half).unwrap();
        for (ch, (a, b)) in r.result.metrics.iter().zip(&fine.metrics).enumerate() {
            match (metric_values(a), metric_values(b)) {
                (Some(a), Some(b)) => {
                    for (x, y) in a.iter().zip(&b) {
                        let rel = if x == y { 0.0 } else { (x - y).abs() / x.abs().max(y.abs()) };
                        worst = worst.max(rel);
                    }
                }
                (None, None) => {}
                _ => {
                    pass = false;
                    notes.push(format!("{} {} channel {ch}: availability changed", r.label, r.scenario.name));
                }
            }
        }
    }
    pass &= worst < 1e-3;
    notes.insert(0, format!("{} runs, worst relative metric change {worst:.2e}", runs.len()));
    outcome(pass, notes.join("; "))
}

// ---------------------------------------------------------------- 9

fn criterion_9(r: &Run, spec: &PhiSpec) -> Outcome {
    let again = simulate(&params(), spec, &r.scenario).unwrap();
    let (a, b) = (to_csv_string(&r.result).unwrap(), to_csv_string(&again).unwrap());
    outcome(a == b, format!("{} bytes, identical: {}", a.len(), a == b))
}

fn main() {
    let mut lines: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut report = |n: usize, name: &'static str, o: Outcome| {
        println!("{} criterion {n} ({name}): {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        lines.push((n, name, o));
    };

    report(1, "Jacobian", criterion_1());
    report(2, "equilibrium", criterion_2());
    report(3, "H-infinity oracle", criterion_3());

    let (c6, k_opt) = criterion_6();
    let synthesized = gains_to_phi(&k_opt, &params()).unwrap();
    let published = preset("mimo-gfm");
    let vsg = preset("vsg-2");
    let droop = preset("droop-5");
    let specs: Vec<(&str, &PhiSpec)> =
        vec![("mimo-gfm (synthesized)", &synthesized), ("mimo-gfm (printed)", &published), ("vsg-2", &vsg), ("droop-5", &droop)];

    let wg = Scenario::wg_step();
    let pref = Scenario::pref_step();
    let wg_runs: Vec<(Run, Duration)> = specs.iter().map(|(l, s)| run(l, s, &wg)).collect();
    let pref_runs: Vec<(Run, Duration)> = specs.iter().map(|(l, s)| run(l, s, &pref)).collect();

    report(4, "droop operating shift", criterion_4(&wg_runs));
    report(5, "droop-5/VSG-2 equivalence", criterion_5(&wg_runs[3].0, &wg_runs[2].0, &pref_runs[3].0, &pref_runs[2].0));
    report(6, "synthesis regression", c6);
    report(7, "damping superiority", criterion_7(&pref_runs[0].0, &pref_runs[2].0, &pref_runs[1].0));
    let all: Vec<&Run> = wg_runs.iter().chain(&pref_runs).map(|(r, _)| r).collect();
    report(8, "step-size convergence", criterion_8(&all, &specs));
    report(9, "determinism", criterion_9(&pref_runs[0].0, &synthesized));

    let failed: Vec<usize> = lines.iter().filter(|(_, _, o)| !o.pass).map(|(n, _, _)| *n).collect();
    println!("{} of {} criteria passed", lines.len() - failed.len(), lines.len());
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
