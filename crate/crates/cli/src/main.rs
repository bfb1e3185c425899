use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

use miura_lab::config::{Command, ExperimentConfig};
use miura_lab::evolution::{
    conserved_quantities, evolve_partial, Conserved, DiagnosticRow, ModelKind, NoObserver,
    Snapshot,
};
use miura_lab::grid::hm1_norm;
use miura_lab::miura::identity_battery;
use miura_lab::profiles::{exact_solution, Perturbation, ProfileSpec};
use miura_lab::quadform::full_report;
use miura_lab::runio::{diagnostics_csv, RunDir};
use miura_lab::schroedinger::{invert, Branch};
use miura_lab::stability::{
    run_apriori, run_asymptotic_decay, run_kink_stability, run_soliton_pipeline, StabilityRun,
};
use miura_lab::{Error, Result};

const THREADS_VAR: &str = "MIURA_LAB_THREADS";

#[derive(Parser)]
#[command(name = "miura-lab", version, about = "KdV/mKdV experiments near solitons and kinks")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON configuration merged over the command defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Parent directory of the run directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// What to print on stdout: the report (json) or the diagnostics table (csv).
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    format: Format,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq)]
enum Format {
    Json,
    Csv,
}

#[derive(ValueEnum, Clone, Copy)]
enum BranchArg {
    FStar,
    FLambda,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evolve the configured model and record diagnostics.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Initial field file, replacing the configured profile.
        #[arg(long)]
        field: Option<PathBuf>,
    },
    /// Invert the Miura map on the configured field.
    Invert {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        branch: Option<BranchArg>,
        #[arg(long)]
        lambda: Option<f64>,
        /// Target field file, replacing the configured profile.
        #[arg(long)]
        field: Option<PathBuf>,
    },
    /// Coercivity and Lieb-Thirring report of the kink quadratic form.
    Quadform {
        #[command(flatten)]
        common: Common,
    },
    /// Miura identity residuals on random band-limited pairs.
    IdentityCheck {
        #[command(flatten)]
        common: Common,
    },
    /// Orbital stability of the mKdV kink.
    KinkStability {
        #[command(flatten)]
        common: Common,
    },
    /// KdV soliton stability through the inverse Miura map.
    SolitonPipeline {
        #[command(flatten)]
        common: Common,
    },
    /// H^{-1} a priori bound over a family of KdV data.
    Apriori {
        #[command(flatten)]
        common: Common,
    },
    /// Asymptotic decay of the kink perturbation in moving windows.
    Decay {
        #[command(flatten)]
        common: Common,
    },
}

impl Cmd {
    fn parts(&self) -> (Command, &Common) {
        match self {
            Cmd::Simulate { common, .. } => (Command::Simulate, common),
            Cmd::Invert { common, .. } => (Command::Invert, common),
            Cmd::Quadform { common } => (Command::Quadform, common),
            Cmd::IdentityCheck { common } => (Command::IdentityCheck, common),
            Cmd::KinkStability { common } => (Command::KinkStability, common),
            Cmd::SolitonPipeline { common } => (Command::SolitonPipeline, common),
            Cmd::Apriori { common } => (Command::Apriori, common),
            Cmd::Decay { common } => (Command::Decay, common),
        }
    }
}

/// Everything a command produces.
struct Outcome {
    report: Value,
    rows: Vec<DiagnosticRow>,
    snapshots: Vec<Snapshot>,
    failure: Option<Error>,
}

impl Outcome {
    fn report_only<T: Serialize>(report: &T) -> Result<Self> {
        Ok(Self {
            report: serde_json::to_value(report)?,
            rows: Vec::new(),
            snapshots: Vec::new(),
            failure: None,
        })
    }

    fn from_stability(run: StabilityRun) -> Result<Self> {
        Ok(Self {
            report: serde_json::to_value(&run.report)?,
            rows: run.trajectory.diagnostics,
            snapshots: run.trajectory.snapshots,
            failure: run.failure,
        })
    }
}

#[derive(Serialize)]
struct SimulateReport {
    model: ModelKind,
    completed: bool,
    failure: Option<String>,
    final_time: f64,
    conserved_initial: Conserved,
    conserved_final: Conserved,
    /// Largest pointwise distance to the exact travelling solution, when the
    /// datum is an unperturbed soliton (KdV) or the bare kink (kink frame).
    exact_error: Option<f64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(text) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = text
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_VAR} must be a positive integer, got {text:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn resolve(cmd: &Cmd) -> Result<ExperimentConfig> {
    let (command, common) = cmd.parts();
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(command, path)?,
        None => ExperimentConfig::defaults(command),
    };
    if let Some(seed) = common.seed {
        cfg.set_seed(seed);
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    match cmd {
        Cmd::Simulate { field, .. } => {
            if field.is_some() {
                cfg.field_file = field.clone();
            }
        }
        Cmd::Invert {
            branch,
            lambda,
            field,
            ..
        } => {
            if field.is_some() {
                cfg.field_file = field.clone();
            }
            match branch {
                Some(BranchArg::FStar) => {
                    cfg.inversion.branch = Branch::FStar;
                    cfg.inversion.lambda = None;
                }
                Some(BranchArg::FLambda) => cfg.inversion.branch = Branch::FLambda,
                None => {}
            }
            if lambda.is_some() {
                cfg.inversion.lambda = *lambda;
            }
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    let cfg = resolve(&cli.command)?;
    let (command, common) = cli.command.parts();
    let dir = RunDir::create(&cfg.output_dir, &cfg.name)?;
    dir.write_config(&cfg)?;

    let outcome = execute(command, &cfg)?;
    dir.write_diagnostics(&outcome.rows)?;
    dir.write_snapshots(&outcome.snapshots)?;
    dir.write_report(&outcome.report)?;
    match common.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&outcome.report)?),
        Format::Csv => print!("{}", diagnostics_csv(&outcome.rows)),
    }
    match outcome.failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn execute(command: Command, cfg: &ExperimentConfig) -> Result<Outcome> {
    match command {
        Command::Simulate => simulate(cfg),
        Command::Invert => {
            let target = cfg.initial_field()?;
            let inv = invert(
                &target,
                cfg.inversion.branch,
                cfg.inversion.lambda,
                cfg.tolerances.inversion,
            )?;
            let mut report = serde_json::to_value(&inv)?;
            report["target_hm1"] = serde_json::to_value(hm1_norm(&target))?;
            Ok(Outcome {
                report,
                rows: Vec::new(),
                snapshots: Vec::new(),
                failure: None,
            })
        }
        Command::Quadform => Outcome::report_only(&full_report(&cfg.quadform)?),
        Command::IdentityCheck => Outcome::report_only(&identity_battery(
            cfg.grid.build()?,
            cfg.identity.pairs,
            cfg.identity.max_wavenumber,
            cfg.identity.amplitude,
            cfg.seed,
        )?),
        Command::KinkStability => Outcome::from_stability(run_kink_stability(cfg)?),
        Command::Decay => Outcome::from_stability(run_asymptotic_decay(cfg)?),
        Command::SolitonPipeline => Outcome::from_stability(run_soliton_pipeline(cfg)?),
        Command::Apriori => {
            let (report, traj) = run_apriori(cfg)?;
            let failure = (!report.completed).then(|| {
                let msg = report
                    .members
                    .iter()
                    .filter_map(|m| m.failure.as_ref().map(|f| format!("member {}: {f}", m.index)))
                    .collect::<Vec<_>>()
                    .join("; ");
                Error::Incomplete(msg)
            });
            let (rows, snapshots) = traj.map_or((Vec::new(), Vec::new()), |t| (t.diagnostics, t.snapshots));
            Ok(Outcome {
                report: serde_json::to_value(&report)?,
                rows,
                snapshots,
                failure,
            })
        }
    }
}

fn simulate(cfg: &ExperimentConfig) -> Result<Outcome> {
    let u0 = cfg.initial_state()?;
    let partial = evolve_partial(
        cfg.model,
        &u0,
        &cfg.stepping,
        &cfg.evolve_options(),
        &mut NoObserver,
    )?;
    let traj = partial.trajectory;
    let unperturbed = cfg.field_file.is_none() && cfg.perturbation == Perturbation::None;
    let exact_error = match (cfg.model, cfg.profile) {
        (ModelKind::Kdv, ProfileSpec::Soliton { .. }) if unperturbed => {
            let exact = exact_solution(&cfg.profile, traj.final_time, u0.grid())?;
            Some((&traj.final_state - &exact).max_abs())
        }
        (ModelKind::KinkFrame, _) if unperturbed => Some(traj.final_state.max_abs()),
        _ => None,
    };
    let report = SimulateReport {
        model: cfg.model,
        completed: partial.failure.is_none(),
        failure: partial.failure.as_ref().map(|e| e.to_string()),
        final_time: traj.final_time,
        conserved_initial: conserved_quantities(&u0, cfg.model),
        conserved_final: conserved_quantities(&traj.final_state, cfg.model),
        exact_error,
    };
    Ok(Outcome {
        report: serde_json::to_value(&report)?,
        rows: traj.diagnostics,
        snapshots: traj.snapshots,
        failure: partial.failure,
    })
}
