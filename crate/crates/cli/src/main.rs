//! `sta`: run stroke scenarios, sweeps and profile fits from the command line.
//!
//! Exit status: 0 on success, 1 on configuration or validation errors,
//! 2 on numerical failures.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sta_core::imaging::{gaussian_fit, infer_in_trap_size, Profile};
use sta_core::runner::{
    run_batch, run_scenario, run_sweep, write_design, BatchOutcome, RunOptions, DRIVE_FILE,
    INDEX_FILE, SUMMARY_FILE, SWEEP_FILE,
};
use sta_core::scenario::{preset, presets, IntegratorOverrides, Scenario, PRESET_NAMES};
use sta_core::{Axis, StaError};

const EXIT_VALIDATION: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "sta",
    version,
    about = "Shortcut-to-adiabaticity strokes for trapped Fermi gases"
)]
struct Cli {
    /// Root directory for artifacts.
    #[arg(
        long,
        global = true,
        env = "STA_OUTPUT_DIR",
        default_value = "sta-output"
    )]
    out_dir: PathBuf,

    /// Relative tolerance of the integrator, overriding the scenario.
    #[arg(long, global = true)]
    rel_tol: Option<f64>,

    /// Absolute tolerance of the integrator, overriding the scenario.
    #[arg(long, global = true)]
    abs_tol: Option<f64>,

    /// Largest integrator step [s].
    #[arg(long, global = true)]
    max_step: Option<f64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct Source {
    /// Scenario file (JSON).
    scenario: Option<PathBuf>,

    /// Built-in preset instead of a file.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the drive table of a scenario without integrating.
    Design(Source),
    /// Run the full pipeline of a scenario; its sweep, if any, is ignored.
    Run(Source),
    /// Run every member of a scenario's sweep and tabulate the results.
    Sweep {
        #[command(flatten)]
        source: Source,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Run several scenarios, writing an index of their outcomes.
    Batch {
        scenarios: Vec<PathBuf>,
        /// Include every built-in preset.
        #[arg(long)]
        presets: bool,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Fit a Gaussian to a profile CSV and optionally infer the in-trap size.
    Fit {
        profile: PathBuf,
        /// Expansion time before imaging [s]; needs a scenario for the trap.
        #[arg(long, requires = "trap")]
        tof: Option<f64>,
        /// Scenario or preset name describing the trap released at t = 0.
        #[arg(long, id = "trap")]
        trap: Option<String>,
        #[arg(long, value_enum, default_value_t = AxisArg::X)]
        axis: AxisArg,
    },
    /// List the built-in presets.
    Presets,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AxisArg {
    X,
    Y,
    Z,
}

impl From<AxisArg> for Axis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::X => Axis::X,
            AxisArg::Y => Axis::Y,
            AxisArg::Z => Axis::Z,
        }
    }
}

fn load_named(name: &str) -> Result<Scenario, StaError> {
    let path = Path::new(name);
    if path.exists() {
        return Scenario::load(path);
    }
    preset(name).ok_or_else(|| {
        StaError::Config(format!(
            "'{name}' is neither a file nor a preset ({})",
            PRESET_NAMES.join(", ")
        ))
    })
}

impl Source {
    fn load(&self) -> Result<Scenario, StaError> {
        match (&self.scenario, &self.preset) {
            (Some(path), _) => Scenario::load(path),
            (None, Some(name)) => {
                preset(name).ok_or_else(|| StaError::Config(format!("unknown preset '{name}'")))
            }
            (None, None) => Err(StaError::Config("no scenario given".into())),
        }
    }
}

fn print_json(value: &impl serde::Serialize) {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    // a closed pipe (e.g. `| head`) is not an error
    let _ = writeln!(std::io::stdout(), "{text}");
}

/// A failed command with its exit status.
#[derive(Debug)]
struct Failure {
    message: String,
    code: u8,
}

impl From<StaError> for Failure {
    fn from(e: StaError) -> Self {
        let code = if e.is_validation() {
            EXIT_VALIDATION
        } else {
            EXIT_NUMERICAL
        };
        Self {
            message: e.to_string(),
            code,
        }
    }
}

/// Reports failed batch members. Numerical failures take precedence over
/// validation ones in the exit status.
fn batch_status(outcome: &BatchOutcome) -> Result<(), Failure> {
    let failed: Vec<&StaError> = outcome
        .results
        .iter()
        .filter_map(|r| r.as_ref().err())
        .collect();
    if failed.is_empty() {
        return Ok(());
    }
    for e in &failed {
        eprintln!("error: {e}");
    }
    let numerical = failed.iter().any(|e| !e.is_validation());
    Err(Failure {
        message: format!(
            "{} of {} scenarios failed",
            failed.len(),
            outcome.results.len()
        ),
        code: if numerical {
            EXIT_NUMERICAL
        } else {
            EXIT_VALIDATION
        },
    })
}

fn run(cli: Cli) -> Result<(), Failure> {
    let overrides = IntegratorOverrides {
        rel_tol: cli.rel_tol,
        abs_tol: cli.abs_tol,
        max_step_s: cli.max_step,
    };
    let opts = RunOptions::new(&cli.out_dir).with_overrides(overrides);
    match cli.command {
        Command::Design(source) => {
            let scenario = source.load()?;
            let report = write_design(&scenario, &opts)?;
            eprintln!(
                "wrote {}",
                opts.scenario_dir(&scenario).join(DRIVE_FILE).display()
            );
            print_json(&report);
        }
        Command::Run(source) => {
            let scenario = source.load()?;
            let summary = run_scenario(&scenario, &opts)?;
            eprintln!(
                "wrote {}",
                opts.scenario_dir(&scenario).join(SUMMARY_FILE).display()
            );
            print_json(&summary);
        }
        Command::Sweep { source, jobs } => {
            let scenario = source.load()?;
            if scenario.sweep.is_none() {
                return Err(
                    StaError::Config(format!("scenario '{}' has no sweep", scenario.name)).into(),
                );
            }
            let outcome = run_sweep(&scenario, &opts.clone().with_parallelism(jobs))?;
            eprintln!(
                "wrote {}",
                opts.scenario_dir(&scenario).join(SWEEP_FILE).display()
            );
            print_json(&outcome.index);
            batch_status(&outcome)?;
        }
        Command::Batch {
            scenarios,
            presets: with_presets,
            jobs,
        } => {
            let mut batch = Vec::new();
            if with_presets {
                batch.extend(presets());
            }
            for path in &scenarios {
                batch.push(Scenario::load(path)?);
            }
            let outcome = run_batch(&batch, &opts.clone().with_parallelism(jobs))?;
            eprintln!("wrote {}", cli.out_dir.join(INDEX_FILE).display());
            print_json(&outcome.index);
            batch_status(&outcome)?;
        }
        Command::Fit {
            profile,
            tof,
            trap,
            axis,
        } => {
            let file = File::open(&profile)
                .map_err(|e| StaError::from(e).context(format!("opening {}", profile.display())))?;
            let data = Profile::read_csv(file)
                .map_err(|e| e.context(format!("reading {}", profile.display())))?;
            let fit = gaussian_fit(&data, None)?;
            let in_trap = match (tof, trap) {
                (Some(t), Some(name)) => {
                    let scenario = load_named(&name)?;
                    let (spec, gas) = scenario.stroke_and_gas()?;
                    let cfg = scenario.integrator_config(overrides)?;
                    Some(infer_in_trap_size(&fit, &spec, &gas, t, axis.into(), &cfg)?)
                }
                _ => None,
            };
            print_json(&serde_json::json!({
                "axis": data.axis,
                "fit": fit,
                "in_trap_sigma": in_trap,
            }));
        }
        Command::Presets => {
            let mut out = std::io::stdout();
            for name in PRESET_NAMES {
                let _ = writeln!(out, "{name}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
