//! The `fraclap` runner: loads a TOML run configuration, executes one of
//! the verification subcommands and writes CSV reports, a JSON verdict
//! where applicable, and a manifest.

pub mod config;
pub mod oracle;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

use fraclap_core::fields::{FieldId, ScalarField};
use fraclap_core::hopf::{self, Outcome};
use fraclap_core::moving_planes;
use fraclap_core::quadrature::{frac_laplacian_batch, write_batch_csv};
use fraclap_core::{Error as CoreError, Point};

pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "fraclap", version, about = "Fractional Laplacian quadrature and Hopf-lemma verification runs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides `output_dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Evaluate the operator at the points in `[eval]`.
    Eval,
    /// Region scan, estimate verdicts and contradiction check.
    VerifyHopf,
    /// Locate the limiting plane and sample boundary slopes.
    MovingPlane,
    /// Compare quadrature with the spectral reference at seeded nodes.
    OracleCheck,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Eval => "eval",
            Command::VerifyHopf => "verify-hopf",
            Command::MovingPlane => "moving-plane",
            Command::OracleCheck => "oracle-check",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass = 0,
    ContractViolation = 1,
    ConfigError = 2,
    Vacuous = 3,
    NonConvergence = 4,
    NoStartingPlane = 5,
}

impl Status {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Core(CoreError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Input-validation failures from the library count as configuration
    /// errors; anything else is a runtime failure.
    pub fn from_core(e: CoreError) -> Self {
        match e {
            CoreError::InvalidOrder(_)
            | CoreError::InvalidDimension(_)
            | CoreError::DimensionMismatch { .. }
            | CoreError::InvalidRegionParams(_)
            | CoreError::InvalidField(_)
            | CoreError::MissingDecay(_)
            | CoreError::NotPowerOfTwo(_)
            | CoreError::BoxTooSmall(_)
            | CoreError::InvalidQuadSpec(_)
            | CoreError::InvalidArgument(_) => CliError::Config(e.to_string()),
            other => CliError::Core(other),
        }
    }

    pub fn status(&self) -> Status {
        match self {
            CliError::Config(_) | CliError::Io(_) => Status::ConfigError,
            CliError::Core(CoreError::NoStartingPlane { .. }) => Status::NoStartingPlane,
            CliError::Core(CoreError::InsufficientRows { .. }) => Status::NonConvergence,
            CliError::Core(_) => Status::ContractViolation,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub status: Status,
    pub message: String,
    /// Files written, relative to the output directory.
    pub outputs: Vec<String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    jobs: usize,
    status: Status,
    exit_code: i32,
    message: &'a str,
    wall_time_seconds: f64,
    outputs: &'a [String],
    config: &'a RunConfig,
}

/// Parses the command line, runs, and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let Some(path) = cli.config.as_deref() else {
        eprintln!("configuration error: --config PATH is required");
        return Status::ConfigError.code();
    };
    let mut cfg = match RunConfig::load(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return e.status().code();
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = cli.out.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let outcome = execute(cli.command, &cfg, &out, cli.jobs);
    let line = format!("{}: {:?} (exit {}) {}", cli.command.name(), outcome.status, outcome.status.code(), outcome.message);
    if outcome.status == Status::Pass {
        println!("{line}");
    } else {
        eprintln!("{line}");
    }
    outcome.status.code()
}

/// Runs one subcommand with an already validated configuration and writes
/// its reports and `manifest.toml` into `out`.
pub fn execute(command: Command, cfg: &RunConfig, out: &Path, jobs: Option<usize>) -> RunOutcome {
    let start = Instant::now();
    if let Err(e) = std::fs::create_dir_all(out) {
        return RunOutcome { status: Status::ConfigError, message: format!("cannot create {}: {e}", out.display()), outputs: vec![] };
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(jobs.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => return RunOutcome { status: Status::ConfigError, message: e.to_string(), outputs: vec![] },
    };
    let threads = pool.current_num_threads();
    let mut outputs = Vec::new();
    let result = pool.install(|| match command {
        Command::Eval => cmd_eval(cfg, out, &mut outputs),
        Command::VerifyHopf => cmd_verify_hopf(cfg, out, &mut outputs),
        Command::MovingPlane => cmd_moving_plane(cfg, out, &mut outputs),
        Command::OracleCheck => cmd_oracle_check(cfg, out, &mut outputs),
    });
    let (status, message) = match result {
        Ok(r) => r,
        Err(e) => (e.status(), e.to_string()),
    };
    outputs.push("manifest.toml".into());
    let manifest = Manifest {
        command: command.name(),
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        jobs: threads,
        status,
        exit_code: status.code(),
        message: &message,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        outputs: &outputs,
        config: cfg,
    };
    let written = toml::to_string(&manifest)
        .map_err(|e| e.to_string())
        .and_then(|s| std::fs::write(out.join("manifest.toml"), s).map_err(|e| e.to_string()));
    if let Err(e) = written {
        return RunOutcome { status: Status::ConfigError, message: format!("cannot write manifest: {e}"), outputs };
    }
    RunOutcome { status, message, outputs }
}

type CmdResult = Result<(Status, String), CliError>;

fn create(out: &Path, name: &str, outputs: &mut Vec<String>) -> Result<BufWriter<File>, CliError> {
    outputs.push(name.to_string());
    Ok(BufWriter::new(File::create(out.join(name))?))
}

fn write_json<T: Serialize>(out: &Path, name: &str, value: &T, outputs: &mut Vec<String>) -> Result<(), CliError> {
    let mut f = create(out, name, outputs)?;
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| CliError::Io(e.into()))?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

fn scalar_field(cfg: &RunConfig) -> Result<ScalarField, CliError> {
    Ok(cfg.build_field()?.scalar().clone())
}

fn cmd_eval(cfg: &RunConfig, out: &Path, outputs: &mut Vec<String>) -> CmdResult {
    let e = cfg.eval.as_ref().ok_or_else(|| CliError::Config("eval needs an [eval] table with points".into()))?;
    let u = scalar_field(cfg)?;
    let alpha = cfg.order()?;
    let spec = cfg.quad_spec();
    let points: Vec<Point> = e.points.iter().map(|p| Point::new(p).map_err(CliError::from_core)).collect::<Result<_, _>>()?;

    if !e.oracle {
        let results = frac_laplacian_batch(&u, &points, alpha, &spec);
        let mut f = create(out, "eval.csv", outputs)?;
        write_batch_csv(&mut f, &points, &results)?;
        f.flush()?;
        let failed = results.iter().filter(|r| r.is_err()).count();
        let unconverged = results.iter().filter(|r| matches!(r, Ok(q) if !q.converged)).count();
        return Ok(if failed > 0 {
            (Status::ContractViolation, format!("{failed} of {} points failed", points.len()))
        } else if unconverged > 0 {
            (Status::NonConvergence, format!("{unconverged} of {} points did not converge", points.len()))
        } else {
            (Status::Pass, format!("{} points", points.len()))
        });
    }

    let oc = cfg.oracle.unwrap_or_default();
    let reference = oracle::reference(&u, alpha, oc.grid_size(cfg.n), oc.half_width).map_err(CliError::from_core)?;
    let nodes: Vec<usize> = points
        .iter()
        .map(|p| {
            let (idx, _) = reference.grid().nearest_node(p);
            if reference.grid().node(idx).norm() >= 0.5 * oc.half_width {
                return Err(CliError::Config(format!("point {:?} is outside the spectral reference core", p.coords())));
            }
            Ok(idx)
        })
        .collect::<Result<_, _>>()?;
    let rows = oracle::compare(&u, alpha, &spec, &reference, &nodes).map_err(CliError::from_core)?;
    let mut f = create(out, "eval.csv", outputs)?;
    let mut header: Vec<String> = (1..=cfg.n).map(|k| format!("x{k}")).collect();
    header.extend(["value", "error_estimate", "evals", "reference", "gap"].map(String::from));
    writeln!(f, "{}", header.join(","))?;
    for r in &rows {
        let x: Vec<String> = r.x.iter().map(|v| v.to_string()).collect();
        writeln!(f, "{},{},{},{},{},{}", x.join(","), r.value, r.error_estimate, r.evals, r.reference, r.gap)?;
    }
    f.flush()?;
    Ok(oracle_status(&rows))
}

fn oracle_status(rows: &[oracle::OracleRow]) -> (Status, String) {
    let unconverged = rows.iter().filter(|r| !r.converged).count();
    let failed = rows.iter().filter(|r| !r.passed).count();
    let worst = rows.iter().map(|r| r.gap / r.tolerance).fold(0.0, f64::max);
    if unconverged > 0 {
        (Status::NonConvergence, format!("{unconverged} of {} points did not converge", rows.len()))
    } else if failed > 0 {
        (Status::ContractViolation, format!("{failed} of {} points exceed the oracle contract (worst gap/tolerance {worst:.3e})", rows.len()))
    } else {
        (Status::Pass, format!("{} points within contract (worst gap/tolerance {worst:.3e})", rows.len()))
    }
}

fn cmd_oracle_check(cfg: &RunConfig, out: &Path, outputs: &mut Vec<String>) -> CmdResult {
    let u = scalar_field(cfg)?;
    let alpha = cfg.order()?;
    let oc = cfg.oracle.unwrap_or_default();
    let reference = oracle::reference(&u, alpha, oc.grid_size(cfg.n), oc.half_width).map_err(CliError::from_core)?;
    let nodes = oracle::seeded_nodes(&reference, oc.radius, oc.count, cfg.seed);
    if nodes.is_empty() {
        return Err(CliError::Config("no grid nodes inside the oracle radius".into()));
    }
    let rows = oracle::compare(&u, alpha, &cfg.quad_spec(), &reference, &nodes).map_err(CliError::from_core)?;
    let mut f = create(out, "oracle.csv", outputs)?;
    let mut header: Vec<String> = (1..=cfg.n).map(|k| format!("x{k}")).collect();
    header.extend(["value", "error_estimate", "evals", "reference", "gap", "tolerance", "passed"].map(String::from));
    writeln!(f, "{}", header.join(","))?;
    for r in &rows {
        let x: Vec<String> = r.x.iter().map(|v| v.to_string()).collect();
        writeln!(f, "{},{},{},{},{},{},{},{}", x.join(","), r.value, r.error_estimate, r.evals, r.reference, r.gap, r.tolerance, r.passed)?;
    }
    f.flush()?;
    Ok(oracle_status(&rows))
}

#[derive(Serialize)]
struct RowNote {
    delta: f64,
    converged: bool,
    note: Option<String>,
}

#[derive(Serialize)]
struct HopfVerdictFile<'a> {
    field: &'a str,
    coefficient: &'a str,
    n: usize,
    alpha: f64,
    epsilon: f64,
    #[serde(rename = "R")]
    big_r: f64,
    delta_grid: Vec<f64>,
    status: Status,
    rows: Vec<RowNote>,
    estimates: Option<&'a hopf::EstimateVerdicts>,
    estimates_error: Option<String>,
    contradiction: &'a hopf::ContradictionVerdict,
    report: &'a hopf::DecompositionReport,
}

fn cmd_verify_hopf(cfg: &RunConfig, out: &Path, outputs: &mut Vec<String>) -> CmdResult {
    let field = cfg.build_field()?;
    let w = field
        .antisymmetric()
        .ok_or_else(|| CliError::Config(format!("verify-hopf needs an anti-symmetric field, got `{}`", cfg.field)))?;
    let w = if w.plane() == 0.0 { w.clone() } else { w.recentered() };
    let cid = cfg.coefficient.clone().unwrap_or_else(|| "zero".into());
    let c = FieldId::parse(&cid).and_then(|id| id.build_coefficient()).map_err(CliError::from_core)?;
    let alpha = cfg.order()?;
    let (base, grid) = cfg.hopf_setup()?;
    let spec = cfg.quad_spec();

    let report = hopf::delta_scan(&w, Some(&c), alpha, &base, &grid, &spec).map_err(CliError::from_core)?;
    let mut f = create(out, "scan.csv", outputs)?;
    hopf::write_scan_csv(&mut f, &report)?;
    f.flush()?;

    let estimates = hopf::verify_estimates(&report);
    let contradiction = hopf::contradiction_from_report(&w, &c, &report);
    let unconverged: Vec<f64> = report.rows.iter().filter(|r| !r.converged).map(|r| r.delta).collect();
    let (status, message) = match &estimates {
        Ok(v) if v.vacuous => (Status::Vacuous, "all integrals vanish; the estimates are vacuous".to_string()),
        _ if !unconverged.is_empty() => (Status::NonConvergence, format!("rows at delta = {unconverged:?} did not converge")),
        Err(e) => (Status::NonConvergence, e.to_string()),
        Ok(v) => {
            let failed: Vec<&str> = v.verdicts.iter().filter(|x| !x.passed).map(|x| x.estimate_id.as_str()).collect();
            if v.passed && contradiction.outcome == Outcome::Pass {
                (Status::Pass, format!("all estimates pass; c1 = {}; delta* = {}", v.c1.unwrap_or(f64::NAN), contradiction.delta_star.unwrap_or(f64::NAN)))
            } else {
                let mut why = failed.join(", ");
                if !v.additivity_ok {
                    why.push_str(" additivity");
                }
                if !v.off_axis_ok {
                    why.push_str(" off-axis");
                }
                (Status::ContractViolation, format!("failed: [{why}]; contradiction {:?}", contradiction.outcome))
            }
        }
    };
    let verdict = HopfVerdictFile {
        field: &report.field,
        coefficient: c.name(),
        n: report.n,
        alpha: report.alpha,
        epsilon: report.epsilon,
        big_r: report.big_r,
        delta_grid: grid.values(),
        status,
        rows: report.rows.iter().map(|r| RowNote { delta: r.delta, converged: r.converged, note: r.note.clone() }).collect(),
        estimates: estimates.as_ref().ok(),
        estimates_error: estimates.as_ref().err().map(|e| e.to_string()),
        contradiction: &contradiction,
        report: &report,
    };
    write_json(out, "verdict.json", &verdict, outputs)?;
    Ok((status, message))
}

fn cmd_moving_plane(cfg: &RunConfig, out: &Path, outputs: &mut Vec<String>) -> CmdResult {
    if cfg.plane.is_none() {
        return Err(CliError::Config("moving-plane needs a [plane] table".into()));
    }
    let u = scalar_field(cfg)?;
    let pc = cfg.plane_config(&u);
    let report = moving_planes::run_moving_plane(&u, &pc).map_err(CliError::from_core)?;
    let mut f = create(out, "planes.csv", outputs)?;
    moving_planes::write_scans_csv(&mut f, &report)?;
    f.flush()?;
    let mut f = create(out, "slopes.csv", outputs)?;
    moving_planes::write_slopes_csv(&mut f, &report)?;
    f.flush()?;
    write_json(out, "plane_report.json", &report, outputs)?;
    let lo = report.search.lambda_o;
    Ok(if report.hopf_positive {
        (Status::Pass, format!("lambda_o = {lo}; all sampled slopes positive"))
    } else {
        (Status::ContractViolation, format!("lambda_o = {lo}; some sampled slopes are not positive"))
    })
}
