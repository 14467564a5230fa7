use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use gfm_core::config::{load_params, load_scenario, params_to_toml, read_text, scenario_to_toml};
use gfm_core::controllers::{preset_with_defaults, realize_phi, ControllerDoc, GainVector, PhiSpec, Tuning};
use gfm_core::linsys::freq_response;
use gfm_core::plant::{ConverterParams, OutputVector};
use gfm_core::simkit::{self, MetricsOutcome, Scenario, SimResult, SCENARIOS};
use gfm_core::synthesis::{analyze, synthesize, SynthesisOptions, SynthesisProblem, CHANNEL_NAMES};
use gfm_core::GfmError;

const OK: u8 = 0;
const CONFIG: u8 = 1;
const NUMERICAL: u8 = 2;
const UNSTABLE: u8 = 3;

/// Design and simulation of grid-forming converter controllers.
#[derive(Parser, Debug)]
#[command(name = "gfm", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one controller on one scenario.
    Simulate(SimulateArgs),
    /// Tune the MIMO-GFM gains.
    Synthesize(SynthesizeArgs),
    /// Simulate several controllers on the same scenarios.
    Compare(CompareArgs),
    /// Weighted-channel norms and closed-loop eigenvalues of a controller.
    Norm(NormArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// Parameter file (TOML); the reference converter when omitted.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Controller file (TOML).
    #[arg(long, conflicts_with = "preset")]
    controller: Option<PathBuf>,
    /// Preset controller name.
    #[arg(long)]
    preset: Option<String>,
    /// Scenario file or preset name.
    #[arg(long, default_value = "pref_step")]
    scenario: String,
    /// Integration step, seconds.
    #[arg(long)]
    dt: Option<f64>,
}

#[derive(Args, Debug)]
struct SynthesizeArgs {
    #[command(flatten)]
    common: Common,
    /// Initial gains as a controller file with `preset = "mimo-gfm"`.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[command(flatten)]
    common: Common,
    /// Controller files.
    #[arg(long)]
    controller: Vec<PathBuf>,
    /// Preset controller names.
    #[arg(long)]
    preset: Vec<String>,
    /// Scenario files or preset names; both presets when omitted.
    #[arg(long)]
    scenario: Vec<String>,
    /// Label that deviations are measured against; `vsg-2` or the first
    /// controller by default.
    #[arg(long)]
    reference: Option<String>,
    #[arg(long)]
    dt: Option<f64>,
}

#[derive(Args, Debug)]
struct NormArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, conflicts_with = "preset")]
    controller: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
}

/// Error with its exit status.
struct Failure {
    code: u8,
    msg: String,
}

impl From<GfmError> for Failure {
    fn from(e: GfmError) -> Self {
        let code = match e {
            GfmError::Parse(_)
            | GfmError::Io { .. }
            | GfmError::Domain(_)
            | GfmError::UnknownPreset(_)
            | GfmError::MissingTuning(_)
            | GfmError::Element(_)
            | GfmError::Dimension(_)
            | GfmError::DuplicateLabel(_)
            | GfmError::UnknownChannel(_)
            | GfmError::IllPosed { .. } => CONFIG,
            GfmError::Unstable { .. } => UNSTABLE,
            _ => NUMERICAL,
        };
        Failure { code, msg: e.to_string() }
    }
}

fn fail(code: u8, msg: impl Into<String>) -> Failure {
    Failure { code, msg: msg.into() }
}

type Run = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // usage errors share the configuration status
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { CONFIG } else { OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let res = match cli.cmd {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Synthesize(a) => cmd_synthesize(&a),
        Command::Compare(a) => cmd_compare(&a),
        Command::Norm(a) => cmd_norm(&a),
    };
    match res {
        Ok(()) => ExitCode::from(OK),
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn params(c: &Common) -> Result<ConverterParams, Failure> {
    match &c.params {
        Some(p) => Ok(load_params(p)?),
        None => Ok(ConverterParams::default()),
    }
}

fn out_dir(c: &Common) -> Result<&Path, Failure> {
    fs::create_dir_all(&c.out).map_err(|e| fail(CONFIG, format!("cannot create {}: {e}", c.out.display())))?;
    Ok(&c.out)
}

fn write(path: &Path, text: &str) -> Run {
    fs::write(path, text).map_err(|e| fail(CONFIG, format!("cannot write {}: {e}", path.display())))
}

/// Controller from a file or a preset, with its label.
fn controller(file: Option<&Path>, preset: Option<&str>, p: &ConverterParams) -> Result<(String, PhiSpec), Failure> {
    match (file, preset) {
        (Some(f), _) => {
            let spec = ControllerDoc::parse(&read_text(f)?)?.to_spec(p)?;
            let label = f.file_stem().map_or("controller".into(), |s| s.to_string_lossy().into_owned());
            Ok((label, spec))
        }
        (None, Some(name)) => Ok((name.to_string(), preset_with_defaults(name, p, &Tuning::new())?)),
        (None, None) => Err(fail(CONFIG, "give --controller or --preset")),
    }
}

fn scenario(arg: &str, p: &ConverterParams, dt: Option<f64>) -> Result<Scenario, Failure> {
    let mut s = if SCENARIOS.contains(&arg) { Scenario::preset(arg)? } else { load_scenario(Path::new(arg), p)? };
    if let Some(dt) = dt {
        s = s.with_dt(dt);
        s.validate()?;
    }
    Ok(s)
}

fn manifest(out: &Path, command: &str, seed: u64, extra: serde_json::Value, rerun: &str) -> Run {
    let m = json!({
        "tool": "gfm",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "seed": seed,
        "inputs": extra,
        "rerun": rerun,
    });
    write(&out.join("manifest.json"), &(serde_json::to_string_pretty(&m).expect("json value") + "\n"))
}

fn num(v: Option<f64>) -> String {
    v.map_or("NA".into(), |v| format!("{v:?}"))
}

const METRIC_COLUMNS: [&str; 6] = ["steady_state", "overshoot", "settling_time", "peak", "step", "drift"];

fn metric_cells(m: &MetricsOutcome) -> Vec<String> {
    match m {
        MetricsOutcome::Available(m) => vec![
            num(Some(m.steady_state)),
            num(m.overshoot),
            num(Some(m.settling_time)),
            num(Some(m.peak)),
            num(Some(m.step)),
            "NA".into(),
        ],
        MetricsOutcome::Unavailable { drift } => {
            let mut v = vec!["NA".to_string(); 5];
            v.push(num(Some(*drift)));
            v
        }
    }
}

fn metrics_csv(r: &SimResult) -> String {
    let mut s = format!("channel,status,{}\n", METRIC_COLUMNS.join(","));
    for (name, m) in OutputVector::NAMES.iter().zip(&r.metrics) {
        let status = if m.available().is_some() { "available" } else { "unavailable" };
        s.push_str(&format!("{name},{status},{}\n", metric_cells(m).join(",")));
    }
    s
}

/// Copies of the inputs that make the run repeatable from the directory.
fn echo_inputs(out: &Path, p: &ConverterParams, ctrls: &[(String, PhiSpec)], scenarios: &[Scenario]) -> Run {
    write(&out.join("params.toml"), &params_to_toml(p)?)?;
    for (label, spec) in ctrls {
        write(&out.join(format!("controller_{label}.toml")), &spec.to_toml()?)?;
    }
    for s in scenarios {
        write(&out.join(format!("scenario_{}.toml", s.name)), &scenario_to_toml(s)?)?;
    }
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs) -> Run {
    let p = params(&a.common)?;
    let (label, spec) = controller(a.controller.as_deref(), a.preset.as_deref(), &p)?;
    let sc = scenario(&a.scenario, &p, a.dt)?;
    let out = out_dir(&a.common)?;
    echo_inputs(out, &p, &[(label.clone(), spec.clone())], std::slice::from_ref(&sc))?;
    manifest(
        out,
        "simulate",
        a.common.seed,
        json!({ "controller": label, "scenario": sc.name, "dt": sc.dt, "duration": sc.duration }),
        &format!(
            "gfm simulate --params params.toml --controller controller_{label}.toml --scenario scenario_{}.toml --seed {}",
            sc.name, a.common.seed
        ),
    )?;
    let r = simkit::simulate(&p, &spec, &sc)?;
    simkit::export_csv(&r, &out.join("timeseries.csv"))?;
    write(&out.join("metrics.csv"), &metrics_csv(&r))?;
    if let Some(k) = r.diverged_at {
        return Err(fail(UNSTABLE, format!("simulation diverged at t = {} s", r.t[k])));
    }
    if let Some(m) = r.metrics[1].available() {
        println!("p: steady {:.6}, overshoot {}, settling {:.4} s", m.steady_state, num(m.overshoot), m.settling_time);
    }
    Ok(())
}

fn cmd_synthesize(a: &SynthesizeArgs) -> Run {
    let p = params(&a.common)?;
    let k_init = match &a.init {
        Some(f) => {
            let doc = ControllerDoc::parse(&read_text(f)?)?;
            if doc.preset.as_deref() != Some("mimo-gfm") {
                return Err(fail(CONFIG, "initial gains need `preset = \"mimo-gfm\"`"));
            }
            GainVector::from_tuning(&doc.tuning)?
        }
        None => GainVector::initial(),
    };
    k_init.validate()?;
    let mut opts = SynthesisOptions { seed: a.common.seed, ..SynthesisOptions::default() };
    opts.max_iters = a.max_iters.unwrap_or(opts.max_iters);
    opts.restarts = a.restarts.unwrap_or(opts.restarts);
    let out = out_dir(&a.common)?;
    let init_doc = ControllerDoc::from_preset("mimo-gfm", k_init.to_tuning());
    write(&out.join("params.toml"), &params_to_toml(&p)?)?;
    write(&out.join("initial_gains.toml"), &init_doc.to_toml()?)?;
    manifest(
        out,
        "synthesize",
        opts.seed,
        json!({ "options": opts }),
        &format!(
            "gfm synthesize --params params.toml --init initial_gains.toml --max-iters {} --restarts {} --seed {}",
            opts.max_iters, opts.restarts, opts.seed
        ),
    )?;

    let problem = SynthesisProblem::standard(&p)?;
    let res = synthesize(&problem, &k_init, &opts)?;
    let report = res.report(&problem, &opts)?;
    write(&out.join("report.json"), &(serde_json::to_string_pretty(&report).expect("report") + "\n"))?;
    write(&out.join("history.csv"), &res.history_csv())?;
    let doc = ControllerDoc::from_preset("mimo-gfm", res.k_opt.to_tuning());
    write(&out.join("controller.toml"), &doc.to_toml()?)?;
    println!("objective {:.6} -> {:.6}, stable: {}", res.initial_objective, res.gamma, res.stable);
    if !res.stable {
        return Err(fail(UNSTABLE, "no stabilizing gains found"));
    }
    Ok(())
}

const DEVIATION_BAND: f64 = 0.005;

fn cmd_compare(a: &CompareArgs) -> Run {
    let p = params(&a.common)?;
    let mut ctrls = Vec::new();
    for f in &a.controller {
        ctrls.push(controller(Some(f), None, &p)?);
    }
    for name in &a.preset {
        ctrls.push(controller(None, Some(name), &p)?);
    }
    if ctrls.len() < 2 {
        return Err(fail(CONFIG, "compare needs at least two controllers"));
    }
    let mut seen = std::collections::BTreeSet::new();
    if let Some((l, _)) = ctrls.iter().find(|(l, _)| !seen.insert(l.clone())) {
        return Err(fail(CONFIG, format!("duplicate controller label `{l}`")));
    }
    let names: Vec<String> =
        if a.scenario.is_empty() { SCENARIOS.iter().map(|s| s.to_string()).collect() } else { a.scenario.clone() };
    let scenarios = names.iter().map(|n| scenario(n, &p, a.dt)).collect::<Result<Vec<_>, _>>()?;
    let reference = a
        .reference
        .clone()
        .unwrap_or_else(|| if ctrls.iter().any(|(l, _)| l == "vsg-2") { "vsg-2".into() } else { ctrls[0].0.clone() });
    if !ctrls.iter().any(|(l, _)| *l == reference) {
        return Err(fail(CONFIG, format!("reference `{reference}` is not among the controllers")));
    }

    let out = out_dir(&a.common)?;
    echo_inputs(out, &p, &ctrls, &scenarios)?;
    let mut rerun = String::from("gfm compare --params params.toml");
    for (l, _) in &ctrls {
        rerun.push_str(&format!(" --controller controller_{l}.toml"));
    }
    for s in &scenarios {
        rerun.push_str(&format!(" --scenario scenario_{}.toml", s.name));
    }
    rerun.push_str(&format!(" --reference {reference} --seed {}", a.common.seed));
    manifest(
        out,
        "compare",
        a.common.seed,
        json!({
            "controllers": ctrls.iter().map(|(l, _)| l).collect::<Vec<_>>(),
            "scenarios": scenarios.iter().map(|s| &s.name).collect::<Vec<_>>(),
            "reference": reference,
        }),
        &rerun,
    )?;

    let rows = simkit::compare(&p, &ctrls, &scenarios);
    let mut header = vec!["controller".to_string(), "scenario".into(), "status".into()];
    for ch in OutputVector::NAMES {
        header.extend(METRIC_COLUMNS.iter().map(|m| format!("{ch}_{m}")));
    }
    header.extend(["p_max_deviation", "p_tolerance", "p_within_tolerance"].map(String::from));
    let mut csv = header.join(",") + "\n";
    let mut failures = 0;
    for row in &rows {
        let mut cells = vec![row.controller.clone(), row.scenario.clone()];
        let r = match &row.result {
            Ok(r) => {
                simkit::export_csv(r, &out.join(format!("timeseries_{}_{}.csv", row.controller, row.scenario)))?;
                cells.push(if r.diverged_at.is_some() { "diverged".into() } else { "ok".into() });
                if r.diverged_at.is_some() {
                    failures += 1;
                }
                Some(r)
            }
            Err(e) => {
                log::error!("{} on {}: {e}", row.controller, row.scenario);
                failures += 1;
                cells.push(format!("failed: {}", e.replace(',', ";")));
                None
            }
        };
        for k in 0..OutputVector::NAMES.len() {
            match r {
                Some(r) => cells.extend(metric_cells(&r.metrics[k])),
                None => cells.extend(vec!["NA".to_string(); METRIC_COLUMNS.len()]),
            }
        }
        let base = rows.iter().find(|b| b.controller == reference && b.scenario == row.scenario);
        match (r, base.and_then(|b| b.result.as_ref().ok())) {
            (Some(r), Some(b)) if r.diverged_at.is_none() && b.diverged_at.is_none() => {
                let dev = simkit::max_deviation(r, b, 1)?;
                let excursion = b.metrics[1].available().map(|m| m.step.abs());
                let tol = excursion.map(|e| DEVIATION_BAND * e);
                cells.push(num(Some(dev)));
                cells.push(num(tol));
                cells.push(tol.map_or("NA".into(), |t| (dev <= t).to_string()));
            }
            _ => cells.extend(["NA".to_string(), "NA".into(), "NA".into()]),
        }
        csv.push_str(&(cells.join(",") + "\n"));
    }
    write(&out.join("comparison.csv"), &csv)?;
    println!("{} runs, {} failed", rows.len(), failures);
    if failures == rows.len() {
        return Err(fail(NUMERICAL, "every run failed"));
    }
    Ok(())
}

/// Log-spaced frequencies from 1e-4 to 1e6 rad/s, 40 per decade.
fn frequency_grid() -> Vec<f64> {
    (0..=400).map(|k| 10f64.powf(-4.0 + k as f64 / 40.0)).collect()
}

fn cmd_norm(a: &NormArgs) -> Run {
    let p = params(&a.common)?;
    let (label, spec) = controller(a.controller.as_deref(), a.preset.as_deref(), &p)?;
    let out = out_dir(&a.common)?;
    echo_inputs(out, &p, &[(label.clone(), spec.clone())], &[])?;
    manifest(
        out,
        "norm",
        a.common.seed,
        json!({ "controller": label }),
        &format!("gfm norm --params params.toml --controller controller_{label}.toml"),
    )?;
    let problem = SynthesisProblem::standard(&p)?;
    let ctrl = realize_phi(&spec)?;
    let report = analyze(&problem, &ctrl)?;
    write(&out.join("norms.json"), &(serde_json::to_string_pretty(&report).expect("report") + "\n"))?;

    println!("closed-loop eigenvalues:");
    let mut ev = report.eigenvalues.clone();
    ev.sort_by(|a, b| b[0].total_cmp(&a[0]).then(a[1].total_cmp(&b[1])));
    for [re, im] in &ev {
        println!("  {re:+.6e} {im:+.6e}i");
    }
    if !report.stable {
        return Err(fail(UNSTABLE, format!("closed loop of `{label}` is unstable")));
    }
    println!("{:<8} {:>14} {:>14}", "channel", "weighted", "unweighted");
    for c in &report.channels {
        println!("{:<8} {:>14.6} {:>14.6}", c.name, c.weighted, c.unweighted);
    }
    println!("objective {:.6}", report.objective);

    let raw = problem.channels_of(&ctrl)?;
    let weighted = problem.weighted_channels_of(&ctrl)?;
    let mut csv = String::from("omega");
    for n in CHANNEL_NAMES {
        csv.push_str(&format!(",{n}_weighted,{n}_unweighted"));
    }
    csv.push('\n');
    for w in frequency_grid() {
        csv.push_str(&format!("{w:?}"));
        for (t, wt) in raw.iter().zip(&weighted) {
            let gw = freq_response(wt, w)?[(0, 0)].norm();
            let g = freq_response(t, w)?[(0, 0)].norm();
            csv.push_str(&format!(",{gw:?},{g:?}"));
        }
        csv.push('\n');
    }
    write(&out.join("frequency.csv"), &csv)?;
    Ok(())
}
