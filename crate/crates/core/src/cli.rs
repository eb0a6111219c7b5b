//! The `liebracket` command line: `simulate`, `certify`, `audit` and `adapt`
//! over a configuration file, writing CSV trajectories and JSON reports into
//! an output directory together with a manifest that can be fed back as a
//! configuration.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::adaptive::{check_adaptive_convergence, run_adaptive, AdaptiveSettings, StopReason};
use crate::config::{ManifestInfo, ScenarioConfig};
use crate::error::{Error, Result};
use crate::expansion::{audit_bounds, ExpansionConfig, ExpansionContext};
use crate::lbs::build_lbs;
use crate::scenarios::example_lbs_coefficient;
use crate::sim::{fmt_float, integrate_dithered, sup_deviation, Trajectory};
use crate::stability::{exponent_profile, Certificate, CertificateCheck, StabilityBudget};

pub const EXIT_OK: i32 = 0;
pub const EXIT_AUDIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;
pub const EXIT_RESOLUTION: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "liebracket", version, about = "Lie-bracket averaging of dithered systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Simulate the dithered system at each frequency and its averaged system.
    Simulate,
    /// Compute the stability budget and sufficient frequency.
    Certify,
    /// Audit the expansion bounds and identity along a computed trajectory.
    Audit,
    /// Run the frequency adaptation scheme.
    Adapt,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Certify => "certify",
            Command::Audit => "audit",
            Command::Adapt => "adapt",
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML or JSON configuration; built-in defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory (overrides the configuration and environment).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Seed for randomized audit probes.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads for sweeps and probes (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,
    /// Dither frequency; repeat to sweep.
    #[arg(long = "omega", global = true, value_name = "W")]
    pub omega: Vec<f64>,
    /// Multiply the Lipschitz constant used by the audit bounds.
    #[arg(long, global = true, value_name = "F")]
    pub lipschitz_scale: Option<f64>,
}

/// Maps an error to its process exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Divergence { .. } | Error::Numeric(_) => EXIT_DIVERGENCE,
        Error::Infeasible(_) => EXIT_INFEASIBLE,
        Error::Resolution(_) => EXIT_RESOLUTION,
        Error::Input(_) | Error::Config(_) | Error::AssumptionViolation(_) | Error::Io(_) | Error::Json(_) => {
            EXIT_CONFIG
        }
    }
}

/// Result of one command: files written and the exit code it settled on.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub exit_code: i32,
}

/// Loads the configuration, applies flag overrides, runs the command on a
/// pool of the requested size and writes the manifest.
pub fn run(cli: &Cli) -> Result<Outcome> {
    let cfg = resolve_config(cli.command, &cli.common)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.common.workers {
        if n == 0 {
            return Err(Error::Config("--workers must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| execute(cli.command, cfg))
}

/// Parses arguments, runs, reports errors on stderr and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(outcome) => outcome.exit_code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn resolve_config(command: Command, args: &CommonArgs) -> Result<ScenarioConfig> {
    let mut cfg = match &args.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    cfg.manifest = None;
    if !args.omega.is_empty() {
        match command {
            Command::Audit => cfg.audit.omega1 = args.omega.clone(),
            _ if args.omega.len() == 1 => {
                cfg.simulation.omega = args.omega[0];
                cfg.simulation.omega_list = None;
            }
            _ => cfg.simulation.omega_list = Some(args.omega.clone()),
        }
    }
    if let Some(seed) = args.seed {
        cfg.audit.seed = seed;
    }
    if let Some(scale) = args.lipschitz_scale {
        cfg.audit.lipschitz_scale = Some(scale);
    }
    cfg.output.dir = match &args.out {
        Some(dir) => dir.clone(),
        None => cfg.out_dir(),
    };
    cfg.validate()?;
    Ok(cfg)
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, body)?;
        log::info!("wrote {}", path.display());
        self.files.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut body = serde_json::to_string_pretty(value)?;
        body.push('\n');
        self.text(name, &body)
    }

    fn csv(&mut self, name: &str, traj: &Trajectory) -> Result<()> {
        self.text(name, &traj.to_csv_string())
    }
}

fn execute(command: Command, cfg: ScenarioConfig) -> Result<Outcome> {
    let started = Instant::now();
    let mut w = Writer::new(&cfg.output.dir)?;
    let exit_code = match command {
        Command::Simulate => simulate(&cfg, &mut w)?,
        Command::Certify => certify(&cfg, &mut w)?,
        Command::Audit => audit(&cfg, &mut w)?,
        Command::Adapt => adapt(&cfg, &mut w)?,
    };
    let mut manifest = cfg.clone();
    manifest.manifest = Some(ManifestInfo {
        command: command.name().into(),
        version: env!("CARGO_PKG_VERSION").into(),
        wall_time_s: started.elapsed().as_secs_f64(),
        files: w.files.iter().filter_map(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()).collect(),
        exit_code,
    });
    w.json("manifest.json", &manifest)?;
    Ok(Outcome { out_dir: w.dir, files: w.files, exit_code })
}

/// File name of the dithered trajectory at `omega`.
pub fn trajectory_file(omega: f64) -> String {
    format!("system_omega_{}.csv", fmt_float(omega))
}

#[derive(Debug, Serialize)]
struct DeviationRow {
    omega: f64,
    file: String,
    final_norm: f64,
    sup_deviation: Option<f64>,
    diverged_at: Option<f64>,
}

fn simulate(cfg: &ScenarioConfig, w: &mut Writer) -> Result<i32> {
    let sys = cfg.system()?;
    let sim = &cfg.simulation;
    let x0 = cfg.x0();
    let lbs = build_lbs(&sys)?;
    let mut code = EXIT_OK;
    let averaged = match lbs.integrate(sim.t0, &x0, sim.h, sim.t_end, sim.lbs_method) {
        Ok(traj) => traj,
        Err(Error::Divergence { t, partial }) => {
            log::error!("averaged trajectory diverged at t = {t}");
            code = EXIT_DIVERGENCE;
            *partial
        }
        Err(e) => return Err(e),
    };
    let averaged_complete = code == EXIT_OK;
    let omegas = cfg.omegas();
    let runs: Vec<Result<Trajectory>> = omegas
        .par_iter()
        .map(|&omega| integrate_dithered(&sys, omega, sim.t0, &x0, sim.h, sim.t_end, sim.method))
        .collect();
    let mut rows = Vec::with_capacity(omegas.len());
    for (&omega, run) in omegas.iter().zip(runs) {
        let file = trajectory_file(omega);
        let row = match run {
            Ok(traj) => {
                w.csv(&file, &traj)?;
                DeviationRow {
                    omega,
                    final_norm: traj.last().norm(),
                    sup_deviation: if averaged_complete { Some(sup_deviation(&traj, &averaged)?) } else { None },
                    diverged_at: None,
                    file,
                }
            }
            Err(Error::Divergence { t, partial }) => {
                log::error!("trajectory at omega = {omega} diverged at t = {t}");
                w.csv(&file, &partial)?;
                code = EXIT_DIVERGENCE;
                DeviationRow {
                    omega,
                    final_norm: partial.last().norm(),
                    sup_deviation: None,
                    diverged_at: Some(t),
                    file,
                }
            }
            Err(e) => return Err(e),
        };
        rows.push(row);
    }
    w.csv("lbs.csv", &averaged)?;
    w.json("deviation.json", &rows)?;
    Ok(code)
}

fn certify(cfg: &ScenarioConfig, w: &mut Writer) -> Result<i32> {
    let sys = cfg.system()?;
    let lipschitz = sys
        .lipschitz()
        .ok_or_else(|| Error::Config("scenario has no Lipschitz constant; set scenario.lipschitz".into()))?;
    let (alpha_bar, beta_bar) = cfg.envelope()?;
    if !(beta_bar > 0.0) {
        return Err(Error::Infeasible(format!("averaged decay rate beta_bar = {beta_bar} is not positive")));
    }
    let profile = exponent_profile(&sys.powers())?;
    let budget = StabilityBudget::certify(alpha_bar, beta_bar, cfg.budget.t_f, cfg.budget.d, lipschitz, &profile)?;
    let q = alpha_bar * (-beta_bar * budget.t_f).exp() + budget.d;
    let mut checks = vec![
        CertificateCheck {
            name: "contraction".into(),
            pass: q > 0.0 && q < 1.0,
            detail: format!("alpha_bar e^(-beta_bar t_f) + D = {q}"),
        },
        CertificateCheck {
            name: "envelope".into(),
            pass: budget.alpha >= 1.0 && budget.beta > 0.0 && budget.beta < beta_bar,
            detail: format!("alpha = {}, beta = {}, beta_bar = {beta_bar}", budget.alpha, budget.beta),
        },
        CertificateCheck {
            name: "omega_star_at_least_one".into(),
            pass: budget.log10_omega_star >= 0.0,
            detail: format!("log10(omega_star) = {}", budget.log10_omega_star),
        },
    ];
    if cfg.scenario.name.starts_with("paper-example") {
        let s = &cfg.scenario;
        let c = example_lbs_coefficient(s.a, s.b, s.k);
        checks.push(CertificateCheck {
            name: "averaged_system_stable".into(),
            pass: c.stable,
            detail: format!("a - b^2 k = {}", c.coefficient),
        });
    }
    let covered: Vec<String> =
        cfg.omegas().iter().map(|&o| format!("{}: {}", fmt_float(o), o.log10() >= budget.log10_omega_star)).collect();
    checks.push(CertificateCheck {
        name: "configured_frequency_covered".into(),
        pass: cfg.omegas().iter().all(|o| o.log10() >= budget.log10_omega_star),
        detail: format!("omega >= omega_star per configured frequency: {}", covered.join(", ")),
    });
    w.json("certificate.json", &Certificate { budget, checks })?;
    Ok(EXIT_OK)
}

fn audit(cfg: &ScenarioConfig, w: &mut Writer) -> Result<i32> {
    let sys = cfg.system()?;
    let a = &cfg.audit;
    let x0 = cfg.x0();
    let t0 = cfg.simulation.t0;
    let setup = ExpansionConfig { steps_per_period: a.steps_per_period, panels_per_period: a.panels_per_period };
    let mut code = EXIT_OK;
    for &omega1 in &a.omega1 {
        let mut ctx = ExpansionContext::new(&sys, omega1, t0, t0 + a.horizon, &x0, setup)?;
        if let Some(scale) = a.lipschitz_scale {
            let l =
                ctx.lipschitz().ok_or_else(|| Error::Config("scenario has no Lipschitz constant to scale".into()))?;
            ctx = ctx.with_lipschitz(l * scale);
        }
        let report = audit_bounds(&ctx, a.probes, a.seed)?;
        log::info!(
            "omega1 = {omega1}: {} violations, identity residual {:e}",
            report.violations,
            report.identity_residual
        );
        if !report.pass {
            code = EXIT_AUDIT_FAIL;
        }
        w.json(&format!("audit_omega_{}.json", fmt_float(omega1)), &report)?;
    }
    Ok(code)
}

#[derive(Debug, Serialize)]
struct AdaptiveSummary {
    report: crate::adaptive::AdaptiveReport,
    epochs: Vec<crate::adaptive::EpochSummary>,
}

fn adapt(cfg: &ScenarioConfig, w: &mut Writer) -> Result<i32> {
    let sys = cfg.system()?;
    let a = &cfg.adaptive;
    let settings = AdaptiveSettings {
        w0: a.w0,
        t_f: a.t_f,
        h: cfg.simulation.h,
        method: cfg.simulation.method,
        max_epochs: a.max_epochs,
        x_tol: a.x_tol,
        w_tol: a.w_tol,
    };
    let run = run_adaptive(&sys, cfg.simulation.t0, &cfg.x0(), settings)?;
    let report = check_adaptive_convergence(&run, a.x_tol, a.w_tol);
    w.text("adaptive.csv", &run.to_csv_string())?;
    if run.stop_reason == StopReason::Divergence {
        log::error!("adaptive run diverged after {} epochs", run.epochs.len());
    }
    let code = if report.pass { EXIT_OK } else { EXIT_DIVERGENCE };
    w.json("adaptive_epochs.json", &AdaptiveSummary { report, epochs: run.summary() })?;
    Ok(code)
}
