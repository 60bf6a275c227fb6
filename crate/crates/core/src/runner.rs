//! Scenario execution: design, integrate, observe, and write artifacts.
//!
//! Each scenario writes into its own directory:
//! `trajectory.csv` (one row per output time), `drive.csv` (the applied
//! drive in Hz^2) and `summary.json`. CSV files open with a `#` header block
//! holding the resolved configuration as JSON.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::drive::{feasibility_check, DriveKind, DriveSchedule, FeasibilityReport};
use crate::dynamics::{hold_continuation, integrate, tof_continuation};
use crate::error::{Result, StaError};
use crate::integrator::{IntegratorConfig, OutputGrid};
use crate::model::{
    hz_to_rad, rad_to_hz, AxisTriple, GasSpec, IntegrationStats, Regime, StrokeSpec, Trajectory,
};
use crate::observables::{evaluate, AdiabatSource, ObservableRecord};
use crate::scenario::{check_unique_names, IntegratorOverrides, PostStrokeConfig, Scenario};
use crate::schedule::FrequencySchedule;

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const DRIVE_FILE: &str = "drive.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const INDEX_FILE: &str = "index.json";
pub const SWEEP_FILE: &str = "sweep.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    /// Root directory; each scenario writes into `<out_dir>/<name>` unless
    /// it names its own `output_dir`.
    pub out_dir: PathBuf,
    pub parallelism: usize,
    /// Applied on top of every scenario's integrator settings.
    pub overrides: IntegratorOverrides,
}

impl RunOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            out_dir: out_dir.into(),
            parallelism: 1,
            overrides: IntegratorOverrides::default(),
        }
    }

    pub fn with_parallelism(mut self, parallelism: usize) -> Self {
        self.parallelism = parallelism;
        self
    }

    pub fn with_overrides(mut self, overrides: IntegratorOverrides) -> Self {
        self.overrides = overrides;
        self
    }

    pub fn scenario_dir(&self, scenario: &Scenario) -> PathBuf {
        scenario
            .output_dir
            .clone()
            .unwrap_or_else(|| self.out_dir.join(&scenario.name))
    }
}

/// Everything derived from a scenario before integration.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedConfig {
    pub scenario: Scenario,
    pub stroke: StrokeSpec,
    pub gas: GasSpec,
    pub final_omega: AxisTriple,
    pub integrator: IntegratorConfig,
}

/// A finished pipeline run held in memory.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub resolved: ResolvedConfig,
    pub schedule: FrequencySchedule,
    pub drive: DriveSchedule,
    pub trajectory: Trajectory,
    pub records: Vec<ObservableRecord>,
    pub feasibility: FeasibilityReport,
    /// Index of the sample at `t = tau`.
    pub stroke_end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub t_s: f64,
    pub b: AxisTriple,
    pub bdot: AxisTriple,
    /// `bdot_j / omega_j0`
    pub bdot_over_omega0: AxisTriple,
    pub q_star: Option<f64>,
    /// units of <H(0)>
    pub mean_energy: f64,
    /// units of <H(0)>
    pub mean_work: f64,
    pub ratio_rz: f64,
    pub ratio_zx: f64,
    pub cq: f64,
    pub stress: AxisTriple,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub label: Option<String>,
    pub regime: Regime,
    pub drive: DriveKind,
    pub tau_s: f64,
    /// State at the end of the stroke.
    pub stroke_end: Checkpoint,
    /// State at the last output time (after any hold or expansion).
    pub final_state: Checkpoint,
    /// Largest `|sigma_z/sigma_x - 1|` over the stroke samples.
    pub max_ratio_zx_deviation: f64,
    /// Largest `|sigma_jj|` over all samples [1/s].
    pub max_abs_stress: f64,
    /// `max_abs_stress` divided by the geometric mean initial frequency.
    pub max_abs_stress_scaled: f64,
    pub max_abs_cq: f64,
    pub feasibility: FeasibilityReport,
    /// [Hz^2], signed
    pub min_omega_sq_hz2: AxisTriple,
    /// [Hz^2], signed
    pub max_omega_sq_hz2: AxisTriple,
    pub integration: IntegrationStats,
    pub samples: usize,
}

fn checkpoint(sim: &Simulation, i: usize) -> Checkpoint {
    let s = &sim.trajectory.states[i];
    let r = &sim.records[i];
    Checkpoint {
        t_s: s.t,
        b: s.b,
        bdot: s.bdot,
        bdot_over_omega0: s.bdot / sim.resolved.stroke.omega0,
        q_star: r.q_star,
        mean_energy: r.mean_energy,
        mean_work: r.mean_work,
        ratio_rz: r.sizes.ratio_rz,
        ratio_zx: r.sizes.ratio_zx,
        cq: s.cq,
        stress: r.stress,
    }
}

fn max_abs(values: impl Iterator<Item = f64>) -> f64 {
    values.map(f64::abs).fold(0.0, f64::max)
}

impl Simulation {
    pub fn summary(&self) -> Summary {
        let sc = &self.resolved.scenario;
        let stroke = &self.records[..=self.stroke_end];
        let max_abs_stress = max_abs(self.records.iter().flat_map(|r| r.stress.iter()));
        let nu0 = self.resolved.stroke.omega0.product().cbrt();
        let hz2 = |w2: AxisTriple| w2.map(|v| v / hz_to_rad(1.0).powi(2));
        Summary {
            name: sc.name.clone(),
            label: sc.label.clone(),
            regime: sc.regime,
            drive: self.drive.kind,
            tau_s: sc.tau_s,
            stroke_end: checkpoint(self, self.stroke_end),
            final_state: checkpoint(self, self.records.len() - 1),
            max_ratio_zx_deviation: max_abs(stroke.iter().map(|r| r.sizes.ratio_zx - 1.0)),
            max_abs_stress,
            max_abs_stress_scaled: max_abs_stress / nu0,
            max_abs_cq: max_abs(self.records.iter().map(|r| r.cq)),
            min_omega_sq_hz2: hz2(self.feasibility.min_omega_sq),
            max_omega_sq_hz2: hz2(self.feasibility.max_omega_sq),
            feasibility: self.feasibility.clone(),
            integration: self.trajectory.stats,
            samples: self.trajectory.len(),
        }
    }
}

/// Resolves a scenario without integrating anything.
pub fn resolve(scenario: &Scenario, overrides: IntegratorOverrides) -> Result<ResolvedConfig> {
    scenario.check()?;
    let (stroke, gas) = scenario.stroke_and_gas()?;
    let integrator = scenario.integrator_config(overrides)?;
    Ok(ResolvedConfig {
        scenario: scenario.clone(),
        stroke,
        gas,
        final_omega: stroke.final_omega(),
        integrator,
    })
}

/// Runs the pipeline of one scenario in memory. A sweep, if present, is
/// ignored; see [`run_sweep`].
pub fn simulate(scenario: &Scenario, overrides: IntegratorOverrides) -> Result<Simulation> {
    let ctx = |e: StaError| e.context(format!("scenario '{}'", scenario.name));
    simulate_inner(scenario, overrides).map_err(ctx)
}

fn simulate_inner(scenario: &Scenario, overrides: IntegratorOverrides) -> Result<Simulation> {
    let resolved = resolve(scenario, overrides)?;
    let (spec, gas) = (resolved.stroke, resolved.gas);
    let schedule = scenario.schedule()?;
    let drive = scenario.build_drive()?;
    let cfg = &resolved.integrator;

    let mut trajectory = integrate(&drive, &spec, &gas, cfg)?;
    let stroke_end = trajectory.len() - 1;
    let post_cfg = cfg
        .clone()
        .with_output(OutputGrid::Uniform(scenario.output.post_samples));
    match scenario.post_stroke {
        Some(PostStrokeConfig::Hold { duration_s }) => {
            let w = schedule.post_stroke_omega();
            trajectory = hold_continuation(&trajectory, w * w, duration_s, &post_cfg)?;
        }
        Some(PostStrokeConfig::Tof { duration_s }) => {
            trajectory = tof_continuation(&trajectory, duration_s, &post_cfg)?;
        }
        None => {}
    }
    let trap_on = !matches!(scenario.post_stroke, Some(PostStrokeConfig::Tof { .. }));
    let records = evaluate(
        &trajectory,
        &AdiabatSource {
            schedule: &schedule,
            trap_on_after_stroke: trap_on,
        },
    )?;
    let feasibility = feasibility_check(&drive, scenario.output.drive_samples);
    Ok(Simulation {
        resolved,
        schedule,
        drive,
        trajectory,
        records,
        feasibility,
        stroke_end,
    })
}

fn header_block(kind: &str, resolved: &impl Serialize) -> String {
    let json = serde_json::to_string(resolved).expect("configuration serializes");
    format!("# sta {kind}\n# config: {json}\n")
}

/// Missing values become empty cells.
fn push_cells(out: &mut String, values: &[Option<f64>]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        if let Some(v) = v {
            write!(out, "{v}").expect("writing to a string");
        }
    }
    out.push('\n');
}

fn push_row(out: &mut String, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write!(out, "{v}").expect("writing to a string");
    }
    out.push('\n');
}

const TRAJECTORY_COLUMNS: &str = "t_s,b_x,b_y,b_z,bdot_x,bdot_y,bdot_z,\
omega_sq_x,omega_sq_y,omega_sq_z,q_star,energy_h0,work_h0,\
sigma_bar_x,sigma_bar_y,sigma_bar_z,sigma_x_m,sigma_y_m,sigma_z_m,\
ratio_zx,ratio_rz,cq,stress_xx,stress_yy,stress_zz";

/// Trajectory table. `omega_sq_*` are in rad^2/s^2; `q_star` is empty while
/// the trap is off.
pub fn trajectory_csv(sim: &Simulation) -> String {
    let mut out = header_block("trajectory", &sim.resolved);
    out.push_str(TRAJECTORY_COLUMNS);
    out.push('\n');
    for ((s, w2), r) in sim
        .trajectory
        .states
        .iter()
        .zip(&sim.trajectory.drive_sq)
        .zip(&sim.records)
    {
        let mut row: Vec<Option<f64>> = vec![Some(s.t)];
        let mut extend = |vals: &[f64]| row.extend(vals.iter().copied().map(Some));
        extend(&s.b.to_array());
        extend(&s.bdot.to_array());
        extend(&w2.to_array());
        row.push(r.q_star);
        let mut rest = vec![r.mean_energy, r.mean_work];
        rest.extend(r.sizes.dimensionless.to_array());
        rest.extend(r.sizes.sizes.to_array());
        rest.extend([r.sizes.ratio_zx, r.sizes.ratio_rz, r.cq]);
        rest.extend(r.stress.to_array());
        row.extend(rest.into_iter().map(Some));
        push_cells(&mut out, &row);
    }
    out
}

/// The drive sampled uniformly over the stroke, with the reference
/// frequencies alongside. Readable back as a drive table.
pub fn drive_csv(
    resolved: &ResolvedConfig,
    schedule: &FrequencySchedule,
    drive: &DriveSchedule,
    samples: usize,
) -> String {
    let mut out = header_block("drive", resolved);
    out.push_str(
        "t_s,omega_sq_x_hz2,omega_sq_y_hz2,omega_sq_z_hz2,\
reference_x_hz,reference_y_hz,reference_z_hz\n",
    );
    let n = samples.max(2);
    let scale = hz_to_rad(1.0).powi(2);
    for i in 0..n {
        let t = drive.tau * i as f64 / (n - 1) as f64;
        let mut row = vec![t];
        row.extend((drive.omega_sq(t) / AxisTriple::splat(scale)).to_array());
        row.extend(schedule.omega(t).map(rad_to_hz).to_array());
        push_row(&mut out, &row);
    }
    out
}

/// Resolves and builds the drive without integrating, for `design`.
pub fn design(
    scenario: &Scenario,
    overrides: IntegratorOverrides,
) -> Result<(
    ResolvedConfig,
    FrequencySchedule,
    DriveSchedule,
    FeasibilityReport,
)> {
    let ctx = |e: StaError| e.context(format!("scenario '{}'", scenario.name));
    let resolved = resolve(scenario, overrides).map_err(ctx)?;
    let schedule = scenario.schedule().map_err(ctx)?;
    let drive = scenario.build_drive().map_err(ctx)?;
    let report = feasibility_check(&drive, scenario.output.drive_samples);
    Ok((resolved, schedule, drive, report))
}

/// Writes `drive.csv` only and returns the feasibility report.
pub fn write_design(scenario: &Scenario, opts: &RunOptions) -> Result<FeasibilityReport> {
    let (resolved, schedule, drive, report) = design(scenario, opts.overrides)?;
    let dir = opts.scenario_dir(scenario);
    fs::create_dir_all(&dir)?;
    let table = drive_csv(&resolved, &schedule, &drive, scenario.output.drive_samples);
    fs::write(dir.join(DRIVE_FILE), table)?;
    Ok(report)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Runs one scenario and writes its three artifacts.
pub fn run_scenario(scenario: &Scenario, opts: &RunOptions) -> Result<Summary> {
    let sim = simulate(scenario, opts.overrides)?;
    let dir = opts.scenario_dir(scenario);
    let io = |e: std::io::Error| {
        StaError::from(e).context(format!("writing artifacts to {}", dir.display()))
    };
    fs::create_dir_all(&dir).map_err(io)?;
    fs::write(dir.join(TRAJECTORY_FILE), trajectory_csv(&sim)).map_err(io)?;
    let table = drive_csv(
        &sim.resolved,
        &sim.schedule,
        &sim.drive,
        scenario.output.drive_samples,
    );
    fs::write(dir.join(DRIVE_FILE), table).map_err(io)?;
    let summary = sim.summary();
    write_json(&dir.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub name: String,
    pub status: Status,
    pub directory: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// True when the failure is a configuration or validation problem.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation_error: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchIndex {
    pub scenarios: Vec<IndexEntry>,
}

impl BatchIndex {
    pub fn failures(&self) -> impl Iterator<Item = &IndexEntry> {
        self.scenarios.iter().filter(|e| e.status == Status::Failed)
    }

    pub fn all_ok(&self) -> bool {
        self.failures().next().is_none()
    }
}

/// Outcome of a batch: the index plus each scenario's result in input order.
#[derive(Debug)]
pub struct BatchOutcome {
    pub index: BatchIndex,
    pub results: Vec<Result<Summary>>,
}

/// Runs scenarios on a pool of `opts.parallelism` threads. Failures are
/// recorded in the index and do not stop the batch. Writes
/// `<out_dir>/index.json`.
pub fn run_batch(scenarios: &[Scenario], opts: &RunOptions) -> Result<BatchOutcome> {
    check_unique_names(scenarios)?;
    fs::create_dir_all(&opts.out_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.parallelism.max(1))
        .build()
        .map_err(|e| StaError::Config(format!("thread pool: {e}")))?;
    let results: Vec<Result<Summary>> = pool.install(|| {
        scenarios
            .par_iter()
            .map(|s| run_scenario(s, opts))
            .collect()
    });
    let entries = scenarios
        .iter()
        .zip(&results)
        .map(|(s, r)| IndexEntry {
            name: s.name.clone(),
            status: if r.is_ok() {
                Status::Ok
            } else {
                Status::Failed
            },
            directory: opts.scenario_dir(s),
            error: r.as_ref().err().map(ToString::to_string),
            validation_error: r.as_ref().err().map(StaError::is_validation),
        })
        .collect();
    let index = BatchIndex { scenarios: entries };
    write_json(&opts.out_dir.join(INDEX_FILE), &index)?;
    Ok(BatchOutcome { index, results })
}

const SWEEP_COLUMNS: &str = "member,status,tau_s,alpha_s,target_b_x,target_b_y,target_b_z,\
t_end_s,b_x_end,b_y_end,b_z_end,aspect_ratio_end,q_star_tau,work_tau,cq_end";

/// Expands the sweep of `scenario` and runs the members as a batch under
/// `<out_dir>/<name>/`, then writes `sweep.csv` there with one row per
/// member. `aspect_ratio_end` is `b_x / b_z` at the last output time.
pub fn run_sweep(scenario: &Scenario, opts: &RunOptions) -> Result<BatchOutcome> {
    let members = scenario.expand()?;
    let root = opts.scenario_dir(scenario);
    let member_opts = RunOptions {
        out_dir: root.clone(),
        ..opts.clone()
    };
    let outcome = run_batch(&members, &member_opts)?;

    let mut table = header_block("sweep", scenario);
    table.push_str(SWEEP_COLUMNS);
    table.push('\n');
    for (m, r) in members.iter().zip(&outcome.results) {
        let target = m
            .stroke_and_gas()
            .map(|(spec, _)| spec.target_b.to_array())
            .unwrap_or([f64::NAN; 3]);
        let status = if r.is_ok() { "ok" } else { "failed" };
        write!(table, "{},{status},", m.name).expect("writing to a string");
        let mut row = vec![m.tau_s, m.gas.alpha_s];
        row.extend(target);
        match r {
            Ok(s) => {
                let f = &s.final_state;
                row.push(f.t_s);
                row.extend(f.b.to_array());
                row.push(f.b.x / f.b.z);
                row.push(s.stroke_end.q_star.unwrap_or(f64::NAN));
                row.push(s.stroke_end.mean_work);
                row.push(f.cq);
            }
            Err(_) => row.extend([f64::NAN; 8]),
        }
        push_row(&mut table, &row);
    }
    fs::write(root.join(SWEEP_FILE), table)?;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::preset;

    #[test]
    fn trajectory_table_has_one_row_per_sample() {
        let sc = preset("sec3-isotropic").unwrap();
        let sim = simulate(&sc, IntegratorOverrides::default()).unwrap();
        let csv = trajectory_csv(&sim);
        let mut lines = csv.lines();
        assert!(lines.next().unwrap().starts_with("# sta trajectory"));
        assert!(lines.next().unwrap().starts_with("# config: {"));
        let header = lines.next().unwrap();
        let ncols = header.split(',').count();
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), sim.trajectory.len());
        assert!(rows.iter().all(|r| r.split(',').count() == ncols));
    }

    #[test]
    fn release_leaves_q_star_empty_after_tau() {
        let mut sc = preset("sec4-tof").unwrap();
        sc.sweep = None;
        let sim = simulate(&sc, IntegratorOverrides::default()).unwrap();
        assert!(sim.records[sim.stroke_end].q_star.is_some());
        assert!(sim.records.last().unwrap().q_star.is_none());
        assert_eq!(sim.summary().final_state.t_s, sc.tau_s + 500e-6);
    }

    #[test]
    fn invalid_scenario_reports_its_name() {
        let mut sc = preset("sec3-isotropic").unwrap();
        sc.tau_s = -1.0;
        let err = simulate(&sc, IntegratorOverrides::default()).unwrap_err();
        assert!(err.is_validation());
        assert!(err.to_string().contains("sec3-isotropic"));
    }
}
