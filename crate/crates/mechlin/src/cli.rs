//! Command-line interface over system files: analysis, synthesis, open-loop
//! simulation, closed-loop certification, and a survey of the bundled
//! example corpus.
//!
//! Exit codes are a stable scripting contract:
//! `0` success / conditions satisfied, `1` a solvability condition or a
//! certificate tolerance is violated, `2` input or file errors, `3` the
//! integrator aborted on a numerical problem (divergence, singular locus).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::corpus;
use crate::expr::DEFAULT_ZERO_SEED;
use crate::geometry::{
    check_mf_linearizable, full_relative_degree, half_degree, FullDegreeReport,
    HalfDegreeReport,
};
use crate::model::MechanicalSystem;
use crate::report::{
    analysis_report, degrees, law_report, render_corpus_table, CorpusRow,
};
use crate::sim::{
    closed_loop_run, decoupling_certificate, integrate, DecouplingCertificate, InputSignal,
    SimError, DEFAULT_DT, DEFAULT_HORIZON, DEFAULT_STEP_ONSET,
};
use crate::synthesis::{synthesize, FeedbackLaw, SynthesisError};
use crate::sysfile::{load_system, parse_outputs, LoadedSystem, SysFileError};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VIOLATED: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

#[derive(Parser)]
#[command(
    name = "mechlin",
    version,
    about = "Linearization and decoupling analysis for mechanical control systems",
    long_about = "Analyze mechanical control systems with configuration outputs, decide \
                  whether input-output linearization and decoupling is achievable with \
                  mechanical feedback, construct the linearizing chart and feedback, and \
                  certify the closed loop by simulation."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Relative half-degrees, decoupling matrix, and solvability verdicts
    Analyze(AnalyzeArgs),
    /// Construct the linearizing chart and quadratic feedback
    Synthesize(SynthesizeArgs),
    /// Integrate the open-loop system under chosen input signals
    Simulate(SimulateArgs),
    /// Synthesize, close the loop, and check the decoupling certificate
    Certify(CertifyArgs),
    /// Analyze and certify every bundled example system
    Corpus(CorpusArgs),
}

/// Flags shared by the single-system commands.
#[derive(Args)]
pub struct SystemArgs {
    /// System file (TOML), or the name of a bundled system
    #[arg(long)]
    pub system: String,
    /// Select a [[regime]] variant from the file by name
    #[arg(long)]
    pub regime: Option<String>,
    /// Replace the outputs: an [output_choices] name from the file, or
    /// ';'-separated expressions (one per input channel)
    #[arg(long)]
    pub outputs: Option<String>,
    /// Analysis point, e.g. "x=0.1,0.2;v=0.3,-0.2" (defaults from the file)
    #[arg(long)]
    pub point: Option<String>,
    /// Seed for the randomized structural zero tests
    #[arg(long, default_value_t = DEFAULT_ZERO_SEED)]
    pub seed: u64,
}

#[derive(Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub sys: SystemArgs,
    /// Candidate outputs (';'-separated) tested for full linearizability
    #[arg(long)]
    pub candidates: Option<String>,
    /// Write the report as JSON to this path ('-' for stdout)
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Args)]
pub struct SynthesizeArgs {
    #[command(flatten)]
    pub sys: SystemArgs,
    /// Write the synthesized law as JSON to this path ('-' for stdout)
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub sys: SystemArgs,
    /// Input signals, ';'-separated per channel: zero | step:AMP@ONSET |
    /// sin:AMP@FREQ  (default: all channels zero)
    #[arg(long)]
    pub inputs: Option<String>,
    /// Integration horizon in seconds
    #[arg(long, default_value_t = DEFAULT_HORIZON)]
    pub horizon: f64,
    /// Integration step
    #[arg(long, default_value_t = DEFAULT_DT)]
    pub dt: f64,
    /// Directory for the trajectory CSV
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub sys: SystemArgs,
    /// Certificate horizon in seconds
    #[arg(long, default_value_t = DEFAULT_HORIZON)]
    pub horizon: f64,
    /// Integration step
    #[arg(long, default_value_t = DEFAULT_DT)]
    pub dt: f64,
    /// Write the certificate as JSON to this path ('-' for stdout)
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Directory for the per-channel closed-loop trajectory CSVs
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args)]
pub struct CorpusArgs {
    /// Certificate horizon in seconds
    #[arg(long, default_value_t = DEFAULT_HORIZON)]
    pub horizon: f64,
    /// Integration step
    #[arg(long, default_value_t = DEFAULT_DT)]
    pub dt: f64,
    /// Seed for the randomized structural zero tests
    #[arg(long, default_value_t = DEFAULT_ZERO_SEED)]
    pub seed: u64,
    /// Write the survey rows as JSON to this path ('-' for stdout)
    #[arg(long)]
    pub json: Option<PathBuf>,
}

// ---------------------------------------------------------------------------
// Error / exit-code plumbing

#[derive(Debug)]
pub enum CliError {
    /// Bad files, flags, points, or expressions (exit 2).
    Input(String),
    /// A solvability condition or certificate failed structurally (exit 1).
    Violated(String),
    /// The integrator hit a numerical problem (exit 3).
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Violated(_) => EXIT_VIOLATED,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }
    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Violated(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<SysFileError> for CliError {
    fn from(e: SysFileError) -> CliError {
        CliError::Input(e.to_string())
    }
}

impl From<crate::geometry::GeometryError> for CliError {
    fn from(e: crate::geometry::GeometryError) -> CliError {
        CliError::Input(e.to_string())
    }
}

fn synth_err(e: SynthesisError) -> CliError {
    match e {
        SynthesisError::ConditionsNotMet { .. }
        | SynthesisError::SingularJacobian { .. }
        | SynthesisError::SingularDecouplingMatrix
        | SynthesisError::PatternMismatch(_) => CliError::Violated(e.to_string()),
        other => CliError::Input(other.to_string()),
    }
}

fn sim_err(e: SimError) -> CliError {
    match e {
        SimError::NonFinite { .. } | SimError::Divergence { .. } | SimError::SingularLocus { .. } => {
            CliError::Numeric(e.to_string())
        }
        other => CliError::Input(other.to_string()),
    }
}

// ---------------------------------------------------------------------------
// System resolution

/// A fully resolved analysis case: the system plus its working point.
struct Case {
    label: String,
    system: MechanicalSystem,
    x0: Option<Vec<f64>>,
    v0: Option<Vec<f64>>,
}

fn load_named(system: &str) -> Result<(LoadedSystem, String), CliError> {
    let path = Path::new(system);
    if path.exists() {
        let loaded = load_system(path)?;
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| system.to_string());
        return Ok((loaded, label));
    }
    match corpus::load(system) {
        Some(res) => Ok((res?, system.to_string())),
        None => {
            let names: Vec<&str> = corpus::SYSTEMS.iter().map(|(n, _)| *n).collect();
            Err(CliError::Input(format!(
                "'{system}' is neither a readable file nor a bundled system \
                 (bundled: {})",
                names.join(", ")
            )))
        }
    }
}

fn resolve(sys: &SystemArgs) -> Result<Case, CliError> {
    let (loaded, mut label) = load_named(&sys.system)?;
    let (mut system, mut x0, mut v0) = match &sys.regime {
        None => (loaded.system, loaded.x0, loaded.v0),
        Some(name) => {
            let regime = loaded
                .regimes
                .iter()
                .find(|r| &r.name == name)
                .ok_or_else(|| {
                    let known: Vec<&str> =
                        loaded.regimes.iter().map(|r| r.name.as_str()).collect();
                    CliError::Input(format!(
                        "no regime '{name}' in {label} (regimes: {})",
                        if known.is_empty() {
                            "none".to_string()
                        } else {
                            known.join(", ")
                        }
                    ))
                })?;
            write!(label, " [{name}]").unwrap();
            (
                regime.system.clone(),
                regime.x0.clone(),
                regime.v0.clone(),
            )
        }
    };

    if let Some(spec) = &sys.outputs {
        let exprs = if let Some((name, choice)) = loaded
            .output_choices
            .iter()
            .find(|(n, _)| n == spec)
        {
            write!(label, " ({name})").unwrap();
            choice.clone()
        } else {
            let pieces: Vec<&str> = spec.split(';').map(str::trim).collect();
            write!(label, " (custom outputs)").unwrap();
            parse_outputs(&system, &pieces)?
        };
        system = system
            .with_outputs(exprs)
            .map_err(|e| CliError::Input(e.to_string()))?;
    }

    if let Some(spec) = &sys.point {
        let (x, v) = parse_point_flag(spec).map_err(CliError::Input)?;
        if let Some(x) = x {
            x0 = Some(x);
        }
        if let Some(v) = v {
            v0 = Some(v);
        }
    }
    for (what, p) in [("x", &x0), ("v", &v0)] {
        if let Some(p) = p {
            if p.len() != system.n {
                return Err(CliError::Input(format!(
                    "{what}-point has {} entries for n = {}",
                    p.len(),
                    system.n
                )));
            }
        }
    }
    Ok(Case {
        label,
        system,
        x0,
        v0,
    })
}

/// Parse `"x=0.1,0.2;v=0.3,-0.2"`; either half may be omitted.
fn parse_point_flag(spec: &str) -> Result<(Option<Vec<f64>>, Option<Vec<f64>>), String> {
    let mut x = None;
    let mut v = None;
    for part in spec.split(';') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (key, vals) = part
            .split_once('=')
            .ok_or_else(|| format!("point segment '{part}' is not 'x=…' or 'v=…'"))?;
        let parsed: Result<Vec<f64>, _> = vals
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect();
        let parsed = parsed.map_err(|e| format!("bad number in '{part}': {e}"))?;
        match key.trim() {
            "x" => x = Some(parsed),
            "v" => v = Some(parsed),
            other => return Err(format!("unknown point coordinate '{other}' (use x or v)")),
        }
    }
    Ok((x, v))
}

/// Parse one channel's signal: `zero`, `step:AMP@ONSET`, `sin:AMP@FREQ`.
fn parse_signal(spec: &str) -> Result<InputSignal, String> {
    let spec = spec.trim();
    if spec == "zero" {
        return Ok(InputSignal::Zero);
    }
    let (kind, rest) = spec
        .split_once(':')
        .ok_or_else(|| format!("signal '{spec}' is not zero | step:AMP@ONSET | sin:AMP@FREQ"))?;
    let (a, b) = rest
        .split_once('@')
        .ok_or_else(|| format!("signal '{spec}' is missing '@'"))?;
    let a: f64 = a
        .trim()
        .parse()
        .map_err(|e| format!("bad amplitude in '{spec}': {e}"))?;
    let b: f64 = b
        .trim()
        .parse()
        .map_err(|e| format!("bad value after '@' in '{spec}': {e}"))?;
    match kind.trim() {
        "step" => Ok(InputSignal::Step {
            amplitude: a,
            onset: b,
        }),
        "sin" => Ok(InputSignal::Sinusoid {
            amplitude: a,
            frequency: b,
        }),
        other => Err(format!("unknown signal kind '{other}'")),
    }
}

fn parse_signals(spec: Option<&str>, m: usize) -> Result<Vec<InputSignal>, CliError> {
    match spec {
        None => Ok(vec![InputSignal::Zero; m]),
        Some(s) => {
            let parts: Vec<&str> = s.split(';').collect();
            if parts.len() != m {
                return Err(CliError::Input(format!(
                    "--inputs lists {} signal(s) for m = {m} channel(s)",
                    parts.len()
                )));
            }
            parts
                .iter()
                .map(|p| parse_signal(p).map_err(CliError::Input))
                .collect()
        }
    }
}

fn working_point(case: &Case) -> (Vec<f64>, Option<Vec<f64>>) {
    let x = case.x0.clone().unwrap_or_else(|| {
        eprintln!(
            "note: no analysis point given; using x = 0 (pass --point or add x0 to the file \
             for a generic point)"
        );
        vec![0.0; case.system.n]
    });
    (x, case.v0.clone())
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Input(format!("JSON encoding failed: {e}")))?;
    if path.as_os_str() == "-" {
        println!("{text}");
        return Ok(());
    }
    fs::write(path, text + "\n")
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))
}

// ---------------------------------------------------------------------------
// Commands

fn analyze_case(
    case: &Case,
    seed: u64,
) -> Result<(HalfDegreeReport, Option<FullDegreeReport>, crate::expr::Point), CliError> {
    let (x, v) = working_point(case);
    let point = case.system.point(x, v.clone());
    let half = half_degree(&case.system, &point, seed)?;
    let full = match &v {
        Some(_) => Some(full_relative_degree(&case.system, &point, seed)?),
        None => {
            eprintln!(
                "note: no velocity at the analysis point; tangent-bundle comparison skipped"
            );
            None
        }
    };
    Ok((half, full, point))
}

fn run_analyze(args: &AnalyzeArgs) -> Result<u8, CliError> {
    let case = resolve(&args.sys)?;
    let (half, full, point) = analyze_case(&case, args.sys.seed)?;
    let report = analysis_report(&case.system, &half, full.as_ref(), &point);
    println!("== {} ==", case.label);
    println!("{report}");
    if let Some(spec) = &args.candidates {
        let pieces: Vec<&str> = spec.split(';').map(str::trim).collect();
        let cands = parse_outputs(&case.system, &pieces)?;
        let lin = check_mf_linearizable(&case.system, &cands, &point, args.sys.seed)?;
        let sum = lin
            .sum_nu
            .map_or_else(|| "undefined".to_string(), |s| s.to_string());
        println!(
            "candidate outputs: nu = {}, sum = {sum} (n = {}), fully linearizing: {}",
            degrees(&lin.half.nu),
            lin.n,
            if lin.linearizable { "yes" } else { "no" }
        );
    }
    if let Some(path) = &args.json {
        write_json(&report, path)?;
    }
    Ok(if report.solvable {
        EXIT_OK
    } else {
        EXIT_VIOLATED
    })
}

fn synthesize_case(case: &Case, seed: u64) -> Result<(FeedbackLaw, crate::synthesis::NormalFormDescription, HalfDegreeReport, crate::expr::Point), CliError> {
    let (half, _full, point) = analyze_case(case, seed)?;
    if !half.solvable() {
        return Err(CliError::Violated(format!(
            "solvability conditions fail for {} (MR1: {}, MR2: {})",
            case.label,
            if half.mr1 { "satisfied" } else { "violated" },
            if half.mr2 { "satisfied" } else { "violated" },
        )));
    }
    let (law, nf) = synthesize(&case.system, &half, &point, None).map_err(synth_err)?;
    Ok((law, nf, half, point))
}

fn run_synthesize(args: &SynthesizeArgs) -> Result<u8, CliError> {
    let case = resolve(&args.sys)?;
    let (law, nf, _half, _point) = synthesize_case(&case, args.sys.seed)?;
    let report = law_report(&case.system, &law, &nf);
    println!("== {} ==", case.label);
    println!("{report}");
    if let Some(path) = &args.json {
        write_json(&report, path)?;
    }
    Ok(EXIT_OK)
}

fn run_simulate(args: &SimulateArgs) -> Result<u8, CliError> {
    let case = resolve(&args.sys)?;
    let n = case.system.n;
    let (x, v) = working_point(&case);
    let v = v.unwrap_or_else(|| vec![0.0; n]);
    let signals = parse_signals(args.inputs.as_deref(), case.system.m)?;
    let traj = integrate(&case.system, &x, &v, &signals, args.horizon, args.dt)
        .map_err(sim_err)?;
    let last = traj.times.len() - 1;
    println!("== {} ==", case.label);
    println!(
        "integrated {} steps to t = {}",
        last, traj.times[last]
    );
    println!("final x = {:?}", traj.states[last][..n].to_vec());
    println!("final v = {:?}", traj.states[last][n..].to_vec());
    println!("final y = {:?}", traj.outputs[last]);
    if let Some(dir) = &args.csv {
        ensure_dir(dir)?;
        let path = dir.join(format!("{}_openloop.csv", args.sys.system_stem()));
        fs::write(&path, traj.to_csv())
            .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
        println!("trajectory written to {}", path.display());
    }
    Ok(EXIT_OK)
}

impl SystemArgs {
    fn system_stem(&self) -> String {
        Path::new(&self.system)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.system.clone())
    }
}

fn render_certificate(cert: &DecouplingCertificate) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "decoupling certificate: horizon {} s, dt {}, unit step at t = {}",
        cert.horizon, cert.dt, cert.step_onset
    );
    for ch in &cert.channels {
        let _ = writeln!(
            out,
            "channel {}: half-degree {}; cross-channel deviation {:.3e} (tol {:.1e}): {}; \
             own-channel deviation {:.3e} (tol {:.1e}): {}",
            ch.channel,
            ch.half_degree,
            ch.cross_deviation,
            cert.cross_tolerance,
            if ch.cross_ok { "ok" } else { "VIOLATED" },
            ch.own_deviation,
            cert.own_tolerance,
            if ch.own_ok { "ok" } else { "VIOLATED" },
        );
    }
    let _ = writeln!(
        out,
        "superposition deviation {:.3e} (tol {:.1e}): {}",
        cert.superposition_deviation,
        cert.superposition_tolerance,
        if cert.superposition_ok { "ok" } else { "VIOLATED" },
    );
    let _ = write!(
        out,
        "verdict: {}",
        if cert.passed { "PASS" } else { "FAIL" }
    );
    out
}

fn run_certify(args: &CertifyArgs) -> Result<u8, CliError> {
    let case = resolve(&args.sys)?;
    let n = case.system.n;
    let (law, _nf, _half, _point) = synthesize_case(&case, args.sys.seed)?;
    let (x, v) = working_point(&case);
    let v = v.unwrap_or_else(|| vec![0.0; n]);
    let cert = decoupling_certificate(&case.system, &law, &x, &v, args.horizon, args.dt)
        .map_err(sim_err)?;
    println!("== {} ==", case.label);
    println!("{}", render_certificate(&cert));
    if let Some(path) = &args.json {
        write_json(&cert, path)?;
    }
    if let Some(dir) = &args.csv {
        ensure_dir(dir)?;
        let onset = (DEFAULT_STEP_ONSET / args.dt).round() * args.dt;
        for r in 0..case.system.m {
            let mut signals = vec![InputSignal::Zero; case.system.m];
            signals[r] = InputSignal::Step {
                amplitude: 1.0,
                onset,
            };
            let (orig, chart) = closed_loop_run(
                &case.system,
                &law,
                &x,
                &v,
                &signals,
                args.horizon,
                args.dt,
            )
            .map_err(sim_err)?;
            let stem = args.sys.system_stem();
            for (suffix, traj) in [("", &orig), ("_chart", &chart)] {
                let path = dir.join(format!("{stem}_closedloop_ch{}{suffix}.csv", r + 1));
                fs::write(&path, traj.to_csv()).map_err(|e| {
                    CliError::Input(format!("cannot write {}: {e}", path.display()))
                })?;
            }
        }
        println!(
            "closed-loop trajectories written to {} (per channel, original and chart coordinates)",
            dir.display()
        );
    }
    Ok(if cert.passed { EXIT_OK } else { EXIT_VIOLATED })
}

fn run_corpus(args: &CorpusArgs) -> Result<u8, CliError> {
    let mut rows: Vec<CorpusRow> = Vec::new();
    let mut all_passed = true;
    for (name, _) in corpus::SYSTEMS {
        let loaded = corpus::load(name).expect("bundled name")?;
        let mut cases: Vec<Case> = vec![Case {
            label: "default".into(),
            system: loaded.system.clone(),
            x0: loaded.x0.clone(),
            v0: loaded.v0.clone(),
        }];
        for (choice, exprs) in &loaded.output_choices {
            cases.push(Case {
                label: choice.clone(),
                system: loaded
                    .system
                    .with_outputs(exprs.clone())
                    .map_err(|e| CliError::Input(e.to_string()))?,
                x0: loaded.x0.clone(),
                v0: loaded.v0.clone(),
            });
        }
        for regime in &loaded.regimes {
            cases.push(Case {
                label: format!("regime {}", regime.name),
                system: regime.system.clone(),
                x0: regime.x0.clone(),
                v0: regime.v0.clone(),
            });
        }
        for case in cases {
            let started = Instant::now();
            let (half, full, point) = analyze_case(&case, args.seed)?;
            let sum_nu = half
                .nu
                .iter()
                .try_fold(0usize, |acc, d| d.map(|v| acc + v));
            let solvable = half.solvable();
            let fully = solvable && sum_nu == Some(case.system.n);
            let certificate = if solvable {
                let (law, _nf) =
                    synthesize(&case.system, &half, &point, None).map_err(synth_err)?;
                let x = case.x0.clone().expect("bundled systems carry x0");
                let v = case.v0.clone().expect("bundled systems carry v0");
                let cert =
                    decoupling_certificate(&case.system, &law, &x, &v, args.horizon, args.dt)
                        .map_err(sim_err)?;
                all_passed &= cert.passed;
                Some(cert.passed)
            } else {
                None
            };
            rows.push(CorpusRow {
                system: name.to_string(),
                case: case.label.clone(),
                nu: degrees(&half.nu),
                rho: full
                    .as_ref()
                    .map_or_else(|| "-".to_string(), |f| degrees(&f.rho)),
                solvable,
                fully_linearizing: fully,
                certificate,
            });
            eprintln!(
                "[corpus] {name} / {}: {:.2} s",
                case.label,
                started.elapsed().as_secs_f64()
            );
        }
    }
    print!("{}", render_corpus_table(&rows));
    if let Some(path) = &args.json {
        write_json(&rows, path)?;
    }
    Ok(if all_passed { EXIT_OK } else { EXIT_VIOLATED })
}

/// Parse `std::env::args` and run; returns the process exit code.
pub fn run() -> u8 {
    let cli = Cli::parse();
    dispatch(&cli)
}

/// Run an already-parsed invocation (used by tests and by `run`).
pub fn dispatch(cli: &Cli) -> u8 {
    let result = match &cli.command {
        Command::Analyze(args) => run_analyze(args),
        Command::Synthesize(args) => run_synthesize(args),
        Command::Simulate(args) => run_simulate(args),
        Command::Certify(args) => run_certify(args),
        Command::Corpus(args) => run_corpus(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_flag_accepts_partial_specifications() {
        let (x, v) = parse_point_flag("x=0.1,0.2;v=0.3,-0.2").unwrap();
        assert_eq!(x, Some(vec![0.1, 0.2]));
        assert_eq!(v, Some(vec![0.3, -0.2]));
        let (x, v) = parse_point_flag("v=1.5").unwrap();
        assert_eq!(x, None);
        assert_eq!(v, Some(vec![1.5]));
        assert!(parse_point_flag("y=1").is_err());
        assert!(parse_point_flag("x=one").is_err());
    }

    #[test]
    fn signal_specs_parse() {
        assert!(matches!(parse_signal("zero").unwrap(), InputSignal::Zero));
        assert!(matches!(
            parse_signal("step:0.5@0.1").unwrap(),
            InputSignal::Step { .. }
        ));
        assert!(matches!(
            parse_signal("sin:1.0@2.0").unwrap(),
            InputSignal::Sinusoid { .. }
        ));
        assert!(parse_signal("ramp:1@2").is_err());
        assert!(parse_signal("step:1").is_err());
    }

    #[test]
    fn bundled_names_resolve_without_files() {
        let (loaded, label) = load_named("iwp").unwrap();
        assert_eq!(label, "iwp");
        assert_eq!(loaded.system.n, 2);
        assert!(load_named("no_such_system").is_err());
    }
}
