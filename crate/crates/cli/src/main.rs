//! `l1simplex`: synthesize gains, verify certificates, run scenarios, learn
//! models from traces and evaluate the analytical bounds.

mod gains;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use l1simplex_core::envelope::containment_value;
use l1simplex_core::error::Error as CoreError;
use l1simplex_core::l1::performance_bound;
use l1simplex_core::learning::{complexity_bounds, learn_model, window_samples, ComplexityParams, LearnedModel, SampleWindow};
use l1simplex_core::linalg::{is_spd, rows, spectral_abscissa, Vec2};
use l1simplex_core::params::ParamsFile;
use l1simplex_core::sim::trace::{read_state_columns, write_events, write_trace};
use l1simplex_core::sim::{environment_problem, prepare, run_prepared, RunSummary, Scenario};
use l1simplex_core::synthesis::dwell::{dwell_min_fixed, dwell_min_fixed_sound};
use l1simplex_core::synthesis::{closed_loop, effective_gains, synthesize_env, GainBounds, LyapunovCert, SynthesisConfig};
use l1simplex_core::vehicle::Submodel;

use gains::{apply_overrides, parse_pair, GainEntry, GainsFile};

#[derive(Parser)]
#[command(name = "l1simplex", version, about = "Safe velocity regulation toolkit")]
struct Cli {
    /// only print errors
    #[arg(long, global = true)]
    quiet: bool,
    /// seed for synthesis restarts (overrides the scenario seed when given)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// validate the inputs and stop
    #[arg(long, global = true)]
    schema_check: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize gains and envelopes for every environment of a parameter file
    Synthesize {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one scenario, or every scenario of a directory
    Simulate(SimulateArgs),
    /// Learn a system matrix from the last window of a trace
    Learn {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        period: f64,
        #[arg(long)]
        window: f64,
        /// end of the window (s); defaults to the last row
        #[arg(long)]
        at: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate dwell-time, sample-complexity or tracking bounds
    #[command(subcommand)]
    Bounds(BoundsCmd),
    /// Check the stability, Lyapunov and containment certificates of a gains file
    Verify {
        #[arg(long)]
        gains: PathBuf,
        #[arg(long)]
        params: PathBuf,
    },
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, conflicts_with = "batch", required_unless_present = "batch")]
    scenario: Option<PathBuf>,
    #[arg(long, requires = "scenario")]
    trace: Option<PathBuf>,
    #[arg(long, requires = "scenario")]
    events: Option<PathBuf>,
    #[arg(long, requires = "scenario")]
    summary: Option<PathBuf>,
    /// directory of scenario files to run concurrently
    #[arg(long, requires = "out_dir")]
    batch: Option<PathBuf>,
    /// output directory for --batch
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// gains file replacing on-load synthesis for the environments it lists
    #[arg(long)]
    gains: Option<PathBuf>,
    /// scenario override, e.g. --set envelope.theta=0.3
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand)]
enum BoundsCmd {
    /// Minimum dwell times between the environments of a gains file
    Dwell {
        #[arg(long)]
        gains: PathBuf,
        #[arg(long)]
        params: PathBuf,
    },
    /// Sample-complexity conditions for the learner
    Complexity {
        /// JSON with the constants plus `A`, `k` and `m`
        #[arg(long)]
        config: PathBuf,
    },
    /// Tracking bound of the adaptive controller for one environment of a scenario
    Performance {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        env: String,
        #[arg(long, default_value_t = 1)]
        submodel: u8,
        /// tracking error at activation, "w,v"
        #[arg(long, default_value = "0,0")]
        e_act: String,
        /// uncertainty Lipschitz constant; defaults to the first segment in `env`
        #[arg(long)]
        l: Option<f64>,
        /// uncertainty bound at the origin; defaults as for `l`
        #[arg(long)]
        b: Option<f64>,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ComplexityJob {
    #[serde(flatten)]
    params: ComplexityParams,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    k: usize,
    m: usize,
}

#[derive(Serialize, Deserialize)]
struct LearnOutput {
    #[serde(flatten)]
    model: LearnedModel,
    t: f64,
    period: f64,
    window: f64,
    samples: usize,
}

/// Outcome of a command that ran to completion.
enum Status {
    Ok,
    CertificateFailure,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            let help = matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion);
            return ExitCode::from(if help { 0 } else { 1 });
        }
    };
    let level = if cli.quiet { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(&cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::CertificateFailure) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            let certificate = e.chain().any(|c| {
                matches!(
                    c.downcast_ref::<CoreError>(),
                    Some(CoreError::Certificate(_) | CoreError::Infeasible { .. } | CoreError::NotPositiveDefinite(_))
                )
            });
            ExitCode::from(if certificate { 2 } else { 1 })
        }
    }
}

fn dispatch(cli: &Cli) -> Result<Status> {
    match &cli.cmd {
        Cmd::Synthesize { params, out } => synthesize(cli, params, out),
        Cmd::Simulate(args) => simulate(cli, args),
        Cmd::Learn { trace, period, window, at, out } => learn(cli, trace, *period, *window, *at, out),
        Cmd::Bounds(b) => bounds(cli, b),
        Cmd::Verify { gains, params } => verify(cli, gains, params),
    }
}

fn say(cli: &Cli, msg: impl AsRef<str>) {
    if !cli.quiet {
        println!("{}", msg.as_ref());
    }
}

fn check_input(path: &Path) -> Result<()> {
    if !path.is_file() {
        bail!("input file {} does not exist", path.display());
    }
    Ok(())
}

fn check_output(path: &Path) -> Result<()> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    if !parent.is_dir() {
        bail!("output directory {} does not exist", parent.display());
    }
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(f)).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn load_params(path: &Path) -> Result<ParamsFile> {
    let pf: ParamsFile = read_json(path)?;
    pf.validate().with_context(|| format!("validating {}", path.display()))?;
    Ok(pf)
}

fn synthesize(cli: &Cli, params: &Path, out: &Path) -> Result<Status> {
    check_input(params)?;
    check_output(out)?;
    let pf = load_params(params)?;
    if cli.schema_check {
        return Ok(Status::Ok);
    }
    let cfg = SynthesisConfig::default();
    let mut file = GainsFile::new();
    for spec in pf.environments.iter().filter(|e| e.k_sigma.is_some()) {
        let (_, prob) = environment_problem(spec, &pf.vehicle)?;
        let sol = synthesize_env(&prob, &cfg, cli.seed.unwrap_or(0)).with_context(|| format!("environment {}", spec.tag))?;
        say(cli, format!("{}: decay rate {:.4}, lambda_max {:.3e}", spec.tag, sol.gamma, sol.cert.lambda_max_sigma));
        file.insert(spec.tag.clone(), GainEntry::from_solution(&sol));
    }
    write_json(out, &file)?;
    Ok(Status::Ok)
}

fn verify(cli: &Cli, gains: &Path, params: &Path) -> Result<Status> {
    check_input(gains)?;
    check_input(params)?;
    let pf = load_params(params)?;
    let file: GainsFile = read_json(gains)?;
    if cli.schema_check {
        return Ok(Status::Ok);
    }
    let mut ok = true;
    for (tag, entry) in &file {
        let spec = pf
            .environments
            .iter()
            .find(|e| &e.tag == tag && e.k_sigma.is_some())
            .ok_or_else(|| anyhow!("gains for {tag} but no such environment in {}", params.display()))?;
        let (_, prob) = environment_problem(spec, &pf.vehicle)?;
        let p_bar = entry.p_bar();
        let f = entry.gains();
        let pairs: Vec<_> = prob.a_list.iter().copied().zip(f).collect();
        let cert = LyapunovCert::from_pairs(p_bar, &pairs);
        let spd = is_spd(&p_bar);
        let mut env_ok = spd && cert.is_valid();
        say(cli, format!("{tag}: P_bar positive definite {spd}, lambda_max {:.4e}", cert.lambda_max_sigma));
        for (i, (a, fi)) in pairs.iter().enumerate() {
            let (fw, fv) = effective_gains(fi);
            let bounds = GainBounds::from_a(a);
            let abscissa = spectral_abscissa(&closed_loop(a, fi));
            let hurwitz = bounds.satisfied(fw, fv) && abscissa < 0.0;
            env_ok &= hurwitz;
            say(
                cli,
                format!(
                    "  submodel {}: gains (F^w, F^v) = ({fw:.4}, {fv:.4}), F^w margin {:.4}, F^v margin {:.4}, abscissa {abscissa:.4e}, LMI eigenvalue {:.4e}",
                    i + 1,
                    fw - bounds.fw_lower,
                    (fv - bounds.fv_bound(fw)).abs(),
                    cert.lmi_eigs[i]
                ),
            );
        }
        for (i, c) in prob.c_hats.iter().enumerate() {
            let v = if spd { containment_value(c, &p_bar)? } else { f64::INFINITY };
            env_ok &= v <= 1.0 + 1e-12;
            say(cli, format!("  slab {}: containment value {v:.6} (must be at most 1)", i + 1));
        }
        say(cli, format!("  {}", if env_ok { "ok" } else { "FAILED" }));
        ok &= env_ok;
    }
    Ok(if ok { Status::Ok } else { Status::CertificateFailure })
}

fn load_scenario(cli: &Cli, path: &Path, args: &SimulateArgs) -> Result<Scenario> {
    let mut sc = Scenario::load(path).with_context(|| format!("loading {}", path.display()))?;
    sc = apply_overrides(&sc, &args.sets)?;
    if let Some(seed) = cli.seed {
        sc.seed = seed;
    }
    if let Some(g) = &args.gains {
        let file: GainsFile = read_json(g)?;
        for (tag, entry) in file {
            if sc.stored(&tag).is_some() {
                sc.gains.insert(tag, entry.stored());
            }
        }
    }
    Ok(sc)
}

struct SimOutputs<'a> {
    trace: Option<&'a Path>,
    events: Option<&'a Path>,
    summary: Option<&'a Path>,
}

/// Runs one scenario and writes its files; returns whether a run marked safe kept the slip bound.
fn run_one(cli: &Cli, sc: &Scenario, out: &SimOutputs) -> Result<bool> {
    let envs = prepare(sc)?;
    let run = run_prepared(sc, envs)?;
    if let Some(p) = out.trace {
        write_trace(&run.trace, BufWriter::new(File::create(p)?))?;
    }
    if let Some(p) = out.events {
        write_events(&run.events, BufWriter::new(File::create(p)?))?;
    }
    if let Some(p) = out.summary {
        write_json(p, &run.summary)?;
    }
    say(cli, summary_line(&run.summary, run.events.len()));
    let safe = !sc.safe || run.summary.slip_violations_after_transient == 0;
    if !safe {
        warn!("{}: slip exceeded the bound {} times after the transient", sc.name, run.summary.slip_violations_after_transient);
    }
    Ok(safe)
}

fn summary_line(s: &RunSummary, events: usize) -> String {
    format!(
        "{}: max slip {:.4} ({:.4} after transients), {events} events, {} crossings, max |f~|/rho {:.4}, final state ({:.4}, {:.4})",
        s.name,
        s.max_slip,
        s.max_slip_after_transient,
        s.crossings,
        s.max_f_tilde / s.rho,
        s.final_state[0],
        s.final_state[1]
    )
}

fn simulate(cli: &Cli, args: &SimulateArgs) -> Result<Status> {
    if let Some(path) = &args.scenario {
        check_input(path)?;
        for p in [&args.trace, &args.events, &args.summary].into_iter().flatten() {
            check_output(p)?;
        }
        if let Some(g) = &args.gains {
            check_input(g)?;
        }
        let sc = load_scenario(cli, path, args)?;
        if cli.schema_check {
            say(cli, format!("{}: ok", sc.name));
            return Ok(Status::Ok);
        }
        let out = SimOutputs { trace: args.trace.as_deref(), events: args.events.as_deref(), summary: args.summary.as_deref() };
        return Ok(if run_one(cli, &sc, &out)? { Status::Ok } else { Status::CertificateFailure });
    }
    let dir = args.batch.as_ref().expect("clap enforces --scenario or --batch");
    let out_dir = args.out_dir.as_ref().expect("clap enforces --out-dir");
    if !dir.is_dir() || !out_dir.is_dir() {
        bail!("--batch and --out-dir must be existing directories");
    }
    let mut jobs = Vec::new();
    let mut paths: Vec<PathBuf> =
        std::fs::read_dir(dir)?.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.extension().is_some_and(|x| x == "json")).collect();
    paths.sort();
    for path in paths {
        // parameter and gains files may sit next to the scenarios
        let raw: serde_json::Value = read_json(&path)?;
        if raw.get("schema").is_none() {
            info!("skipping {} (not a scenario)", path.display());
            continue;
        }
        let sc = load_scenario(cli, &path, args)?;
        let stem = path.file_stem().unwrap().to_string_lossy().to_string();
        jobs.push((stem, sc));
    }
    if cli.schema_check {
        say(cli, format!("{} scenarios ok", jobs.len()));
        return Ok(Status::Ok);
    }
    let results: Vec<(String, Result<bool>)> = std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|(stem, sc)| {
                s.spawn(move || {
                    let files = ["trace.csv", "events.jsonl", "summary.json"].map(|ext| out_dir.join(format!("{stem}.{ext}")));
                    let out = SimOutputs { trace: Some(&files[0]), events: Some(&files[1]), summary: Some(&files[2]) };
                    (stem.clone(), run_one(cli, sc, &out))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("scenario thread panicked")).collect()
    });
    let mut status = Status::Ok;
    let mut failed = Vec::new();
    for (stem, r) in results {
        match r {
            Ok(true) => {}
            Ok(false) => status = Status::CertificateFailure,
            Err(e) => {
                eprintln!("{stem}: {e:#}");
                failed.push(stem);
            }
        }
    }
    if !failed.is_empty() {
        bail!("{} scenario(s) failed: {}", failed.len(), failed.join(", "));
    }
    Ok(status)
}

fn learn(cli: &Cli, trace: &Path, period: f64, window: f64, at: Option<f64>, out: &Path) -> Result<Status> {
    check_input(trace)?;
    check_output(out)?;
    if !(period > 0.0 && window > 0.0) {
        bail!("--period and --window must be positive");
    }
    let table = read_state_columns(BufReader::new(File::open(trace)?))?;
    if cli.schema_check {
        return Ok(Status::Ok);
    }
    let t_end = at.or_else(|| table.last().map(|r| r[0])).ok_or_else(|| anyhow!("trace is empty"))?;
    let m = window_samples(window, period);
    let tol = 1e-6 + 1e-9 * t_end.abs();
    let mut states = Vec::with_capacity(m + 1);
    let mut controls = Vec::with_capacity(m + 1);
    for j in 0..=m {
        let target = t_end - (m - j) as f64 * period;
        let i = table.partition_point(|r| r[0] < target - tol);
        let row = table
            .get(i)
            .filter(|r| (r[0] - target).abs() <= tol)
            .ok_or_else(|| anyhow!("trace has no sample at t = {target:.6}; write it at the learner period"))?;
        states.push(Vec2::new(row[1], row[2]));
        controls.push(row[3]);
    }
    let model = learn_model(&SampleWindow { period, states, controls })?;
    say(cli, format!("A_learned = {:?}, cond {:.3e}, residual {:.3e}", rows(&model.a_learned), model.cond_p, model.residual));
    write_json(out, &LearnOutput { model, t: t_end, period, window, samples: m + 1 })?;
    Ok(Status::Ok)
}

fn bounds(cli: &Cli, cmd: &BoundsCmd) -> Result<Status> {
    match cmd {
        BoundsCmd::Dwell { gains, params } => {
            check_input(gains)?;
            check_input(params)?;
            let pf = load_params(params)?;
            let file: GainsFile = read_json(gains)?;
            if cli.schema_check {
                return Ok(Status::Ok);
            }
            let mut certs = Vec::new();
            for (tag, entry) in &file {
                let spec = pf
                    .environments
                    .iter()
                    .find(|e| &e.tag == tag)
                    .ok_or_else(|| anyhow!("no environment {tag} in {}", params.display()))?;
                let (_, prob) = environment_problem(spec, &pf.vehicle)?;
                let pairs: Vec<_> = prob.a_list.iter().copied().zip(entry.gains()).collect();
                let cert = LyapunovCert::from_pairs(entry.p_bar(), &pairs);
                say(cli, format!("{tag}: lambda_max {:.4e}", cert.lambda_max_sigma));
                certs.push(cert);
            }
            let fixed = dwell_min_fixed(&certs)?;
            let sound = dwell_min_fixed_sound(&certs)?;
            println!("dwell_min_fixed {fixed:.6e}");
            println!("dwell_min_fixed_sound {sound:.6e}");
            Ok(Status::Ok)
        }
        BoundsCmd::Complexity { config } => {
            check_input(config)?;
            let job: ComplexityJob = read_json(config)?;
            let n = job.a.len();
            if job.a.iter().any(|r| r.len() != n) {
                bail!("A must be square");
            }
            let a = DMatrix::from_fn(n, n, |i, j| job.a[i][j]);
            if cli.schema_check {
                return Ok(Status::Ok);
            }
            let report = complexity_bounds(&job.params, &a, job.k, job.m)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(Status::Ok)
        }
        BoundsCmd::Performance { scenario, env, submodel, e_act, l, b } => {
            check_input(scenario)?;
            let sc = Scenario::load(scenario)?;
            let sub = Submodel::from_number(*submodel)?;
            let e_act = Vec2::from(parse_pair(e_act)?);
            let seg = sc.schedule.iter().find(|s| &s.env == env);
            let unc = match seg {
                Some(s) => Some(s.uncertainty.resolve(&sc.params.vehicle)?),
                None => None,
            };
            let l = l.or(unc.as_ref().map(|u| u.l)).ok_or_else(|| anyhow!("{env} is not scheduled; pass --l and --b"))?;
            let b = b.or(unc.as_ref().map(|u| u.b)).ok_or_else(|| anyhow!("{env} is not scheduled; pass --l and --b"))?;
            if cli.schema_check {
                return Ok(Status::Ok);
            }
            let envs = prepare(&sc)?;
            let data = envs.iter().find(|d| &d.tag == env).ok_or_else(|| anyhow!("no stored environment {env}"))?;
            let i = sub.number() as usize - 1;
            let pb = performance_bound(&data.a[i], &data.gains[i], &data.p_bar, &sc.l1, &e_act, &data.refs[i].as_vec(), l, b, sc.dwell_min)?;
            println!("{}", serde_json::to_string_pretty(&pb)?);
            Ok(if pb.valid { Status::Ok } else { Status::CertificateFailure })
        }
    }
}
