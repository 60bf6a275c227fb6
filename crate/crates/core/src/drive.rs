//! Squared driving frequencies Omega_j^2(t) actually applied to the trap:
//! the plain reference schedule, the local counterdiabatic (LCD) corrections
//! for every regime, and a feasibility report.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Result, StaError};
use crate::integrator::Dopri5;
use crate::model::{stress_diagonal, Axis, AxisTriple, GasSpec, Regime, HBAR};
use crate::schedule::{FrequencySchedule, ScalingPath, ScheduleSample};

/// Relative tolerance on the per-axis shapes accepted as isotropic.
pub const ISOTROPY_TOLERANCE: f64 = 1e-12;

/// Evaluates Omega_j^2 at a time inside the stroke.
pub trait DriveSource: Send + Sync {
    fn omega_sq(&self, t: f64) -> AxisTriple;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriveKind {
    Constant,
    Reference,
    LcdNonInteracting,
    LcdUnitary,
    LcdIsotropic,
    LcdViscous,
    Table,
    Mirrored,
}

/// Squared driving frequencies on `[0, tau]` [rad^2/s^2]. Values may be
/// negative (expulsive potential); see [`feasibility_check`].
#[derive(Clone)]
pub struct DriveSchedule {
    source: Arc<dyn DriveSource>,
    pub tau: f64,
    pub kind: DriveKind,
}

impl fmt::Debug for DriveSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriveSchedule")
            .field("tau", &self.tau)
            .field("kind", &self.kind)
            .finish_non_exhaustive()
    }
}

impl DriveSchedule {
    pub fn new(source: Arc<dyn DriveSource>, tau: f64, kind: DriveKind) -> Self {
        Self { source, tau, kind }
    }

    /// Omega_j^2(t); times outside the stroke are clamped to `[0, tau]`.
    pub fn omega_sq(&self, t: f64) -> AxisTriple {
        self.source.omega_sq(t.clamp(0.0, self.tau))
    }

    pub fn constant(omega_sq: AxisTriple, tau: f64) -> Self {
        Self::new(Arc::new(Constant(omega_sq)), tau, DriveKind::Constant)
    }

    /// Drives the trap with the reference schedule itself, no correction.
    pub fn reference(schedule: &FrequencySchedule) -> Self {
        Self::new(
            Arc::new(Reference(*schedule)),
            schedule.tau,
            DriveKind::Reference,
        )
    }

    /// Time-mirrored copy, `Omega^2(tau - t)`.
    pub fn mirrored(&self) -> Self {
        Self::new(
            Arc::new(Mirrored {
                inner: self.clone(),
            }),
            self.tau,
            DriveKind::Mirrored,
        )
    }

    /// Piecewise-linear drive through `(t, Omega^2)` samples covering `[0, tau]`.
    pub fn table(times: Vec<f64>, values: Vec<AxisTriple>, tau: f64) -> Result<Self> {
        if times.len() != values.len() || times.len() < 2 {
            return Err(StaError::Config(
                "drive table needs at least two rows".into(),
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(StaError::Config(
                "drive table times must be strictly increasing".into(),
            ));
        }
        if times[0] > 0.0 || *times.last().unwrap() < tau {
            return Err(StaError::Config(format!(
                "drive table must cover [0, {tau:e}] s"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(StaError::Config("drive table has non-finite values".into()));
        }
        Ok(Self::new(
            Arc::new(Table { times, values }),
            tau,
            DriveKind::Table,
        ))
    }
}

struct Constant(AxisTriple);

impl DriveSource for Constant {
    fn omega_sq(&self, _t: f64) -> AxisTriple {
        self.0
    }
}

struct Reference(FrequencySchedule);

impl DriveSource for Reference {
    fn omega_sq(&self, t: f64) -> AxisTriple {
        let w = self.0.omega(t);
        w * w
    }
}

struct Mirrored {
    inner: DriveSchedule,
}

impl DriveSource for Mirrored {
    fn omega_sq(&self, t: f64) -> AxisTriple {
        self.inner.omega_sq(self.inner.tau - t)
    }
}

struct Table {
    times: Vec<f64>,
    values: Vec<AxisTriple>,
}

impl DriveSource for Table {
    fn omega_sq(&self, t: f64) -> AxisTriple {
        let i = self.times.partition_point(|&x| x <= t);
        if i == 0 {
            return self.values[0];
        }
        if i == self.times.len() {
            return *self.values.last().unwrap();
        }
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let w = (t - t0) / (t1 - t0);
        self.values[i - 1] * (1.0 - w) + self.values[i] * w
    }
}

fn check_positive(schedule: &FrequencySchedule) -> Result<()> {
    for axis in Axis::ALL {
        if !(schedule.omega0.get(axis) > 0.0) {
            return Err(StaError::FrequencyCrossesZero { axis, t: 0.0 });
        }
        if !(schedule.omega_final.get(axis) > 0.0) {
            return Err(StaError::FrequencyCrossesZero {
                axis,
                t: schedule.tau,
            });
        }
    }
    Ok(())
}

/// LCD drive for the anisotropic unitary gas, written through the geometric
/// mean frequency `nu`:
///
/// `Omega_j^2 = w_j^2 - 2 (w'_j/w_j)^2 + w''_j/w_j + (nu'/nu)^2/4 - nu''/(2 nu) + w'_j nu'/(w_j nu)`.
pub fn lcd_anisotropic_unitary(schedule: &FrequencySchedule) -> Result<DriveSchedule> {
    check_positive(schedule)?;
    Ok(DriveSchedule::new(
        Arc::new(UnitaryLcd(*schedule)),
        schedule.tau,
        DriveKind::LcdUnitary,
    ))
}

struct UnitaryLcd(FrequencySchedule);

impl UnitaryLcd {
    fn eval(s: &ScheduleSample) -> AxisTriple {
        let w = s.omega;
        let nu = w.product().cbrt();
        // nu'/nu is the mean of the logarithmic rates
        let rates = s.omega_dot / w;
        let nu_dot = nu * rates.sum() / 3.0;
        let rate_dots = s.omega_ddot / w - rates * rates;
        let nu_ddot = nu * (rate_dots.sum() / 3.0) + nu_dot * nu_dot / nu;
        let q = nu_dot / nu;
        w * w + AxisTriple::splat(0.25 * q * q - 0.5 * nu_ddot / nu) + (s.omega_ddot / w)
            - (rates * rates) * 2.0
            + rates * q
    }
}

impl DriveSource for UnitaryLcd {
    fn omega_sq(&self, t: f64) -> AxisTriple {
        Self::eval(&self.0.eval(t))
    }
}

/// LCD drive for a stroke with identical per-axis shapes,
/// `Omega_j^2 = w_j^2 - (3/4)(w'_j/w_j)^2 + (1/2) w''_j/w_j`.
pub fn lcd_isotropic_unitary(schedule: &FrequencySchedule) -> Result<DriveSchedule> {
    check_positive(schedule)?;
    let deviation = schedule.shape_anisotropy();
    if deviation > ISOTROPY_TOLERANCE {
        return Err(StaError::NotIsotropicShape { deviation });
    }
    Ok(DriveSchedule::new(
        Arc::new(IsotropicLcd(*schedule)),
        schedule.tau,
        DriveKind::LcdIsotropic,
    ))
}

struct IsotropicLcd(FrequencySchedule);

impl DriveSource for IsotropicLcd {
    fn omega_sq(&self, t: f64) -> AxisTriple {
        let s = self.0.eval(t);
        let r = s.omega_dot / s.omega;
        s.omega * s.omega - r * r * 0.75 + (s.omega_ddot / s.omega) * 0.5
    }
}

const PATH_CHECK_SAMPLES: usize = 1000;

fn check_path(path: &dyn ScalingPath) -> Result<()> {
    let tau = path.duration();
    for i in 0..=PATH_CHECK_SAMPLES {
        let t = tau * i as f64 / PATH_CHECK_SAMPLES as f64;
        let b = path.eval(t).b;
        for axis in Axis::ALL {
            if !(b.get(axis) > 0.0) {
                return Err(StaError::ScaleFactorNonPositive { axis, t });
            }
        }
    }
    Ok(())
}

/// Exact per-axis inversion of the ideal-gas scaling equation for a desired
/// path, `Omega_j^2 = w_j0^2 / b_j^4 - b''_j / b_j`.
pub fn lcd_noninteracting(
    schedule: &FrequencySchedule,
    path: Arc<dyn ScalingPath>,
) -> Result<DriveSchedule> {
    check_path(path.as_ref())?;
    let tau = path.duration();
    Ok(DriveSchedule::new(
        Arc::new(NonInteractingLcd {
            omega0: schedule.omega0,
            path,
        }),
        tau,
        DriveKind::LcdNonInteracting,
    ))
}

struct NonInteractingLcd {
    omega0: AxisTriple,
    path: Arc<dyn ScalingPath>,
}

impl DriveSource for NonInteractingLcd {
    fn omega_sq(&self, t: f64) -> AxisTriple {
        let p = self.path.eval(t);
        let b2 = p.b * p.b;
        self.omega0 * self.omega0 / (b2 * b2) - p.bddot / p.b
    }
}

/// Number of nodes of the tabulated C_Q along a viscous reference path.
const CQ_NODES: usize = 4097;

/// LCD drive for viscous hydrodynamics along a prescribed path: makes the
/// path an exact solution of the viscous scaling equations,
///
/// `Omega_j^2 = w_j0^2 (1 + C_Q) / (Gamma^(2/3) b_j^2) - hbar alpha sigma_jj / (m <x_j^2>_0 b_j^2) - b''_j/b_j`,
///
/// with C_Q obtained by integrating its rate along the same path.
pub fn lcd_viscous_unitary(
    schedule: &FrequencySchedule,
    gas: &GasSpec,
    path: Arc<dyn ScalingPath>,
) -> Result<DriveSchedule> {
    if gas.regime != Regime::ViscousUnitary {
        return Err(StaError::WrongRegime {
            expected: Regime::ViscousUnitary.name(),
        });
    }
    check_path(path.as_ref())?;
    let tau = path.duration();
    let cq = ViscousHeating::along(path.as_ref(), gas)?;
    Ok(DriveSchedule::new(
        Arc::new(ViscousLcd {
            omega0: schedule.omega0,
            gas: *gas,
            path,
            cq,
        }),
        tau,
        DriveKind::LcdViscous,
    ))
}

/// `dC_Q/dt = Gamma^(2/3) hbar alpha sum_j sigma_jj^2 / <r . grad U>_0`.
pub(crate) fn heating_rate(b: AxisTriple, log_rates: AxisTriple, gas: &GasSpec) -> f64 {
    if gas.alpha_s == 0.0 {
        return 0.0;
    }
    let sigma = stress_diagonal(log_rates);
    let g23 = b.product().cbrt().powi(2);
    g23 * HBAR * gas.alpha_s * (sigma * sigma).sum() / gas.virial_denominator
}

/// C_Q tabulated along a path, cubic Hermite between nodes.
struct ViscousHeating {
    tau: f64,
    values: Vec<f64>,
    rates: Vec<f64>,
}

impl ViscousHeating {
    fn along(path: &dyn ScalingPath, gas: &GasSpec) -> Result<Self> {
        let tau = path.duration();
        let rate = |t: f64| {
            let p = path.eval(t);
            heating_rate(p.b, p.bdot / p.b, gas)
        };
        let times: Vec<f64> = (0..CQ_NODES)
            .map(|i| tau * i as f64 / (CQ_NODES - 1) as f64)
            .collect();
        let rates: Vec<f64> = times.iter().map(|&t| rate(t)).collect();
        let values = if gas.alpha_s == 0.0 {
            vec![0.0; CQ_NODES]
        } else {
            let solver = Dopri5 {
                rel_tol: 1e-12,
                abs_tol: 1e-16,
                max_step: Some(tau / 64.0),
            };
            let (ys, _) = solver.solve(
                |t, _y: &[f64; 1]| [rate(t)],
                0.0,
                [0.0],
                tau,
                &times,
                |_, _| Ok(()),
            )?;
            ys.into_iter().map(|y| y[0]).collect()
        };
        Ok(Self { tau, values, rates })
    }

    fn eval(&self, t: f64) -> f64 {
        let n = self.values.len() - 1;
        let h = self.tau / n as f64;
        let x = (t / h).clamp(0.0, n as f64);
        let i = (x.floor() as usize).min(n - 1);
        let s = x - i as f64;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (d0, d1) = (self.rates[i] * h, self.rates[i + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * y0
            + (s3 - 2.0 * s2 + s) * d0
            + (-2.0 * s3 + 3.0 * s2) * y1
            + (s3 - s2) * d1
    }
}

struct ViscousLcd {
    omega0: AxisTriple,
    gas: GasSpec,
    path: Arc<dyn ScalingPath>,
    cq: ViscousHeating,
}

impl DriveSource for ViscousLcd {
    fn omega_sq(&self, t: f64) -> AxisTriple {
        let p = self.path.eval(t);
        let b2 = p.b * p.b;
        let g23 = p.b.product().cbrt().powi(2);
        let sigma = stress_diagonal(p.bdot / p.b);
        let cq = self.cq.eval(t);
        let pressure = self.omega0 * self.omega0 * ((1.0 + cq) / g23) / b2;
        let damping =
            sigma * (HBAR * self.gas.alpha_s / self.gas.mass) / (self.gas.initial_msq_sizes * b2);
        pressure - damping - p.bddot / p.b
    }
}

/// Stretch of time on one axis where Omega_j^2 < 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NegativeInterval {
    pub axis: Axis,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub min_omega_sq: AxisTriple,
    pub max_omega_sq: AxisTriple,
    pub negative_intervals: Vec<NegativeInterval>,
    pub samples: usize,
}

/// Samples the drive on a uniform grid and reports where an optical trap
/// could not realize it (Omega^2 < 0).
pub fn feasibility_check(drive: &DriveSchedule, samples: usize) -> FeasibilityReport {
    let n = samples.max(2);
    let mut min = AxisTriple::splat(f64::INFINITY);
    let mut max = AxisTriple::splat(f64::NEG_INFINITY);
    let mut open: [Option<f64>; 3] = [None; 3];
    let mut intervals = Vec::new();
    let mut prev_t = 0.0;
    for i in 0..n {
        let t = drive.tau * i as f64 / (n - 1) as f64;
        let w2 = drive.omega_sq(t);
        min = min.zip_map(w2, f64::min);
        max = max.zip_map(w2, f64::max);
        for axis in Axis::ALL {
            let k = axis.index();
            let negative = w2.get(axis) < 0.0;
            match (negative, open[k]) {
                (true, None) => open[k] = Some(t),
                (false, Some(start)) => {
                    intervals.push(NegativeInterval {
                        axis,
                        start,
                        end: prev_t,
                    });
                    open[k] = None;
                }
                _ => {}
            }
        }
        prev_t = t;
    }
    for axis in Axis::ALL {
        if let Some(start) = open[axis.index()] {
            intervals.push(NegativeInterval {
                axis,
                start,
                end: drive.tau,
            });
        }
    }
    intervals.sort_by(|a, b| a.start.total_cmp(&b.start));
    FeasibilityReport {
        feasible: intervals.is_empty(),
        min_omega_sq: min,
        max_omega_sq: max,
        negative_intervals: intervals,
        samples: n,
    }
}
