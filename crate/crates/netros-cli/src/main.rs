//! `netros` — benchmark harness for the robot/edge/cloud placement
//! simulator. Three commands: `calibrate` fits model parameters to
//! measured targets, `compare` evaluates placement policies side by
//! side, and `run` dumps one policy's full event trace.
//!
//! Exit codes: 0 success, 1 usage/parse error, 2 calibration
//! non-convergence, 3 infeasible placement.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use netros_sim::calibrate::{
    apply_params, calibrate, load_targets, CalibrationError, CalibrationTargets, FittedParams,
};
use netros_sim::kpi::{
    export_csv, render_report, robot_load, summarize, CsvReport, KpiError, LatencyReport,
    LoadReport, LoadRow, ResponseReport, ResponseRow,
};
use netros_sim::placement::{place, Placement, PlacementError, Policy};
use netros_sim::sim::{
    face_recognition_transaction, run_simulation, teleop_probe, SimError, TraceLog,
};
use netros_sim::workload::{
    builtin_airport_scenario, parse_scenario_doc, scenario_violations, Scenario, ScenarioDoc,
};

#[derive(Parser)]
#[command(
    name = "netros",
    version,
    about = "Deterministic robot/edge/cloud placement benchmark harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit link latencies, node capacities and transfer parameters to a
    /// measured-targets file, then write them for later runs.
    Calibrate {
        /// Scenario document (JSON); defaults to the builtin scenario.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Measured-targets document (JSON); defaults to the reference
        /// deployment's published numbers.
        #[arg(long)]
        targets: Option<PathBuf>,
        /// Output directory for fitted_params.json.
        #[arg(long, default_value = "netros-out")]
        out: PathBuf,
    },
    /// Place, simulate and report several policies side by side.
    Compare {
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Fitted-parameters file from `calibrate` to overlay on the
        /// scenario before simulating.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Comma-separated subset of local,edge,cloud,hybrid,oracle.
        #[arg(long, default_value = "local,edge,cloud,hybrid")]
        policies: String,
        /// Probe and pipeline samples per policy.
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// Probe rate in Hz.
        #[arg(long = "rate-hz", default_value_t = 1.0)]
        rate_hz: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Output directory for CSVs and the text report.
        #[arg(long, default_value = "netros-out")]
        out: PathBuf,
    },
    /// Simulate a single policy and dump its full event trace.
    Run {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        params: Option<PathBuf>,
        /// One of local,edge,cloud,hybrid,oracle.
        #[arg(long)]
        policy: String,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long = "rate-hz", default_value_t = 1.0)]
        rate_hz: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = "netros-out")]
        out: PathBuf,
    },
}

#[derive(Debug)]
enum AppError {
    Usage(String),
    Calibration(CalibrationError),
    Placement(PlacementError),
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AppError::Usage(msg) => write!(f, "{msg}"),
            AppError::Calibration(e) => write!(f, "{e}"),
            AppError::Placement(e) => write!(f, "{e}"),
        }
    }
}

impl AppError {
    fn code(&self) -> u8 {
        match self {
            AppError::Usage(_) => 1,
            AppError::Calibration(
                CalibrationError::NoRoot { .. } | CalibrationError::NonConvergence { .. },
            ) => 2,
            AppError::Calibration(_) => 1,
            AppError::Placement(
                PlacementError::Infeasible { .. } | PlacementError::NoFeasible,
            ) => 3,
            AppError::Placement(_) => 1,
        }
    }
}

impl From<CalibrationError> for AppError {
    fn from(e: CalibrationError) -> Self {
        AppError::Calibration(e)
    }
}

impl From<PlacementError> for AppError {
    fn from(e: PlacementError) -> Self {
        AppError::Placement(e)
    }
}

impl From<SimError> for AppError {
    fn from(e: SimError) -> Self {
        AppError::Usage(e.to_string())
    }
}

impl From<KpiError> for AppError {
    fn from(e: KpiError) -> Self {
        AppError::Usage(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Keep clap's rendered message but own the exit code so the
            // 0/1/2/3 contract holds even for --help-style errors.
            let is_help = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if is_help { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn dispatch(command: Command) -> Result<(), AppError> {
    match command {
        Command::Calibrate { scenario, targets, out } => cmd_calibrate(scenario, targets, out),
        Command::Compare { scenario, params, policies, samples, rate_hz, seed, out } => {
            let policies = parse_policies(&policies)?;
            let config = RunInputs::assemble(scenario, params, samples, rate_hz, seed)?;
            cmd_compare(&config, &policies, &out)
        }
        Command::Run { scenario, params, policy, samples, rate_hz, seed, out } => {
            let policy = Policy::from_key(policy.trim())
                .ok_or_else(|| AppError::Usage(format!("unknown policy `{policy}`")))?;
            let config = RunInputs::assemble(scenario, params, samples, rate_hz, seed)?;
            cmd_run(&config, policy, &out)
        }
    }
}

fn read_file(path: &Path) -> Result<String, AppError> {
    fs::read_to_string(path)
        .map_err(|e| AppError::Usage(format!("cannot read `{}`: {e}", path.display())))
}

fn write_file(path: &Path, content: &str) -> Result<(), AppError> {
    fs::write(path, content)
        .map_err(|e| AppError::Usage(format!("cannot write `{}`: {e}", path.display())))
}

fn load_doc(path: Option<&Path>) -> Result<ScenarioDoc, AppError> {
    match path {
        None => Ok(builtin_airport_scenario()),
        Some(p) => parse_scenario_doc(&read_file(p)?)
            .map_err(|e| AppError::Usage(format!("scenario `{}`: {e}", p.display()))),
    }
}

fn build_scenario(doc: &ScenarioDoc) -> Result<Scenario, AppError> {
    let violations = scenario_violations(doc);
    if !violations.is_empty() {
        return Err(AppError::Usage(format!(
            "scenario is invalid:\n  - {}",
            violations.join("\n  - ")
        )));
    }
    Scenario::from_doc(doc).map_err(|e| AppError::Usage(e.to_string()))
}

/// The first declared slice carries the scenario's own traffic.
fn home_slice(scenario: &Scenario) -> Result<String, AppError> {
    scenario
        .topology
        .slices
        .first()
        .map(|s| s.id.clone())
        .ok_or_else(|| AppError::Usage("scenario declares no network slice".into()))
}

fn parse_policies(list: &str) -> Result<Vec<Policy>, AppError> {
    let mut policies = Vec::new();
    for key in list.split(',').map(str::trim).filter(|k| !k.is_empty()) {
        let policy = Policy::from_key(key)
            .ok_or_else(|| AppError::Usage(format!("unknown policy `{key}`")))?;
        if !policies.contains(&policy) {
            policies.push(policy);
        }
    }
    if policies.is_empty() {
        return Err(AppError::Usage("no policies requested".into()));
    }
    Ok(policies)
}

/// Everything a simulation run needs, with fitted parameters applied.
struct RunInputs {
    scenario: Scenario,
    slice: String,
    samples: usize,
    rate_hz: f64,
    seed: u64,
}

impl RunInputs {
    fn assemble(
        scenario_path: Option<PathBuf>,
        params_path: Option<PathBuf>,
        samples: usize,
        rate_hz: f64,
        seed: u64,
    ) -> Result<RunInputs, AppError> {
        if samples == 0 {
            return Err(AppError::Usage("--samples must be at least 1".into()));
        }
        if !(rate_hz > 0.0) {
            return Err(AppError::Usage("--rate-hz must be positive".into()));
        }
        let mut doc = load_doc(scenario_path.as_deref())?;
        if let Some(p) = params_path {
            let params = FittedParams::from_json(&read_file(&p)?)
                .map_err(|e| AppError::Usage(format!("params `{}`: {e}", p.display())))?;
            apply_params(&mut doc, &params)?;
        }
        let scenario = build_scenario(&doc)?;
        let slice = home_slice(&scenario)?;
        Ok(RunInputs { scenario, slice, samples, rate_hz, seed })
    }
}

struct PolicyOutcome {
    latency: netros_sim::kpi::Summary,
    load: LoadRow,
    response: ResponseRow,
    trace: TraceLog,
}

fn evaluate_policy(inputs: &RunInputs, policy: Policy) -> Result<PolicyOutcome, AppError> {
    let placement: Placement = place(&inputs.scenario, policy)?;
    let rtts = teleop_probe(
        &inputs.scenario,
        &placement,
        &inputs.slice,
        inputs.samples,
        inputs.rate_hz,
        inputs.seed,
    )?;
    let pairs = face_recognition_transaction(
        &inputs.scenario,
        &placement,
        &inputs.slice,
        inputs.samples,
        inputs.seed,
    )?;
    let trace = run_simulation(
        &inputs.scenario,
        &placement,
        &inputs.slice,
        inputs.scenario.sim.load_horizon_ms,
        inputs.seed,
    )?;
    let latency = summarize(&rtts)?;
    let (cpu_low_pct, cpu_high_pct, memory_gb) = robot_load(&trace)?;
    let n = pairs.len() as f64;
    let response = ResponseRow {
        recognition_ms: pairs.iter().map(|p| p.0).sum::<f64>() / n,
        response_ms: pairs.iter().map(|p| p.1).sum::<f64>() / n,
    };
    Ok(PolicyOutcome {
        latency,
        load: LoadRow { cpu_low_pct, cpu_high_pct, memory_gb },
        response,
        trace,
    })
}

fn ensure_out_dir(out: &Path) -> Result<(), AppError> {
    fs::create_dir_all(out)
        .map_err(|e| AppError::Usage(format!("cannot create `{}`: {e}", out.display())))
}

fn cmd_calibrate(
    scenario_path: Option<PathBuf>,
    targets_path: Option<PathBuf>,
    out: PathBuf,
) -> Result<(), AppError> {
    let doc = load_doc(scenario_path.as_deref())?;
    let scenario = build_scenario(&doc)?;
    let targets: CalibrationTargets = match targets_path {
        None => CalibrationTargets::default(),
        Some(p) => load_targets(&read_file(&p)?)
            .map_err(|e| match e {
                CalibrationError::Parse(msg) => {
                    AppError::Usage(format!("targets `{}`: {msg}", p.display()))
                }
                other => AppError::Calibration(other),
            })?,
    };
    let params = calibrate(&targets, &scenario)?;
    ensure_out_dir(&out)?;
    let path = out.join("fitted_params.json");
    write_file(&path, &params.to_json())?;
    println!("fitted parameters written to {}", path.display());
    println!("residual {:.6}", params.residual);
    Ok(())
}

fn cmd_compare(inputs: &RunInputs, policies: &[Policy], out: &Path) -> Result<(), AppError> {
    let mut latency = LatencyReport::new();
    let mut load = LoadReport::default();
    let mut resp = ResponseReport::default();
    for &policy in policies {
        let outcome = evaluate_policy(inputs, policy)?;
        latency.insert(policy, outcome.latency);
        load.rows.insert(policy, outcome.load);
        resp.rows.insert(policy, outcome.response);
    }
    ensure_out_dir(out)?;
    export_csv(&latency, &out.join("latency.csv"))?;
    export_csv(&load, &out.join("load.csv"))?;
    export_csv(&resp, &out.join("response.csv"))?;
    let report = match render_report(&latency, &load, &resp) {
        Ok(text) => text,
        // Fewer than the four standard policies: fall back to the raw
        // tables instead of refusing the run.
        Err(KpiError::MissingPolicy { .. }) => fallback_report(&latency, &load, &resp),
        Err(e) => return Err(e.into()),
    };
    write_file(&out.join("report.txt"), &report)?;
    print!("{report}");
    Ok(())
}

fn cmd_run(inputs: &RunInputs, policy: Policy, out: &Path) -> Result<(), AppError> {
    let outcome = evaluate_policy(inputs, policy)?;
    let mut latency = LatencyReport::new();
    let mut load = LoadReport::default();
    let mut resp = ResponseReport::default();
    latency.insert(policy, outcome.latency);
    load.rows.insert(policy, outcome.load);
    resp.rows.insert(policy, outcome.response);
    ensure_out_dir(out)?;
    write_file(&out.join("trace.csv"), &outcome.trace.to_csv())?;
    export_csv(&latency, &out.join("latency.csv"))?;
    export_csv(&load, &out.join("load.csv"))?;
    export_csv(&resp, &out.join("response.csv"))?;
    let report = fallback_report(&latency, &load, &resp);
    write_file(&out.join("report.txt"), &report)?;
    print!("{report}");
    println!(
        "trace: {} events, digest {:016x}",
        outcome.trace.records.len(),
        outcome.trace.digest()
    );
    Ok(())
}

/// Plain rendering used when the full four-policy report does not apply.
fn fallback_report(latency: &LatencyReport, load: &LoadReport, resp: &ResponseReport) -> String {
    format!(
        "== Probe round-trip latency ==\n{}\n== Robot load ==\n{}\n== Pipeline timing ==\n{}",
        latency.to_csv(),
        load.to_csv(),
        resp.to_csv()
    )
}
