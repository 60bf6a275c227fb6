//! Reference trap-frequency schedules and the scale-factor paths they induce.

use serde::{Deserialize, Serialize};

use crate::error::{Result, StaError};
use crate::model::{Axis, AxisTriple, StrokeSpec};

/// `10u^3 - 15u^4 + 6u^5` with its first and second derivatives in `u`.
pub fn smoothstep(u: f64) -> (f64, f64, f64) {
    let u2 = u * u;
    let v = 1.0 - u;
    let s = u2 * u * (10.0 - 15.0 * u + 6.0 * u2);
    let ds = 30.0 * u2 * v * v;
    let dds = 60.0 * u * v * (1.0 - 2.0 * u);
    (s, ds, dds)
}

/// Behaviour of the trap after the stroke ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PostStroke {
    /// Frequencies stay at their final values.
    #[default]
    Hold,
    /// The trap is switched off.
    Release,
}

/// Frequencies and their first two time derivatives at one instant, per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleSample {
    pub omega: AxisTriple,
    pub omega_dot: AxisTriple,
    pub omega_ddot: AxisTriple,
}

/// Quintic smoothstep interpolation of every trap frequency between its
/// initial value and `omega0 / b(tau)^2`, with zero first and second
/// derivatives at both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencySchedule {
    pub omega0: AxisTriple,
    pub omega_final: AxisTriple,
    pub tau: f64,
    pub post: PostStroke,
}

impl FrequencySchedule {
    pub fn smoothstep(spec: &StrokeSpec) -> Self {
        Self {
            omega0: spec.omega0,
            omega_final: spec.final_omega(),
            tau: spec.tau,
            post: PostStroke::Hold,
        }
    }

    pub fn with_post(mut self, post: PostStroke) -> Self {
        self.post = post;
        self
    }

    /// Evaluates the schedule. Times are clamped to `[0, tau]`; use
    /// [`FrequencySchedule::post_stroke_omega`] past the end of the stroke.
    pub fn eval(&self, t: f64) -> ScheduleSample {
        let u = (t / self.tau).clamp(0.0, 1.0);
        let (s, ds, dds) = smoothstep(u);
        let delta = self.omega_final - self.omega0;
        ScheduleSample {
            omega: self.omega0 + delta * s,
            omega_dot: delta * (ds / self.tau),
            omega_ddot: delta * (dds / (self.tau * self.tau)),
        }
    }

    pub fn omega(&self, t: f64) -> AxisTriple {
        self.eval(t).omega
    }

    /// Trap frequency for `t > tau` according to the post-stroke mode.
    pub fn post_stroke_omega(&self) -> AxisTriple {
        match self.post {
            PostStroke::Hold => self.omega_final,
            PostStroke::Release => AxisTriple::ZERO,
        }
    }

    /// Largest relative deviation between the per-axis shapes
    /// `omega_j(t)/omega_j(0)`; zero for an isotropic stroke.
    pub fn shape_anisotropy(&self) -> f64 {
        let ratio = self.omega_final / self.omega0;
        ratio.spread() / ratio.max().abs()
    }
}

/// Scale factors and their first two derivatives at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathPoint {
    pub b: AxisTriple,
    pub bdot: AxisTriple,
    pub bddot: AxisTriple,
}

/// A prescribed, twice-differentiable scale-factor trajectory on `[0, tau]`.
pub trait ScalingPath: Send + Sync {
    fn eval(&self, t: f64) -> PathPoint;
    fn duration(&self) -> f64;
}

/// Builds b, bdot, bddot from `L = ln b` and its derivatives.
fn from_log(l: AxisTriple, ldot: AxisTriple, lddot: AxisTriple) -> PathPoint {
    let b = l.map(f64::exp);
    PathPoint {
        b,
        bdot: b * ldot,
        bddot: b * (lddot + ldot * ldot),
    }
}

fn check_positive(schedule: &FrequencySchedule) -> Result<()> {
    // The smoothstep is monotone, so positivity at both ends covers the stroke.
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

/// Logarithmic frequency rates `r = omegadot/omega` and `rdot`.
fn log_rates(s: &ScheduleSample) -> (AxisTriple, AxisTriple) {
    let r = s.omega_dot / s.omega;
    let rdot = s.omega_ddot / s.omega - r * r;
    (r, rdot)
}

/// Adiabatic scale factors of the unitary gas,
/// `b_j = (omega_j0 / omega_j) (nu / nu_0)^(1/2)` with `nu` the geometric
/// mean frequency. Derivatives are analytic.
#[derive(Debug, Clone, Copy)]
pub struct AdiabaticReference {
    schedule: FrequencySchedule,
}

pub fn adiabatic_reference(schedule: &FrequencySchedule) -> Result<AdiabaticReference> {
    check_positive(schedule)?;
    Ok(AdiabaticReference {
        schedule: *schedule,
    })
}

impl AdiabaticReference {
    pub fn schedule(&self) -> &FrequencySchedule {
        &self.schedule
    }

    /// `Gamma_ad^(2/3)`, the adiabatic volume factor to the two-thirds.
    pub fn gamma_two_thirds(&self, t: f64) -> f64 {
        let b = self.eval(t).b;
        b.product().cbrt().powi(2)
    }
}

impl ScalingPath for AdiabaticReference {
    fn eval(&self, t: f64) -> PathPoint {
        let s = self.schedule.eval(t);
        let w0 = self.schedule.omega0;
        let ln_nu_ratio = (s.omega / w0).iter().map(f64::ln).sum::<f64>() / 3.0;
        let l = (w0 / s.omega).map(f64::ln) + AxisTriple::splat(0.5 * ln_nu_ratio);
        let (r, rdot) = log_rates(&s);
        let ldot = AxisTriple::splat(r.sum() / 6.0) - r;
        let lddot = AxisTriple::splat(rdot.sum() / 6.0) - rdot;
        from_log(l, ldot, lddot)
    }

    fn duration(&self) -> f64 {
        self.schedule.tau
    }
}

/// Adiabatic scale factors of the ideal gas, `b_j = (omega_j0/omega_j)^(1/2)`
/// independently per axis.
#[derive(Debug, Clone, Copy)]
pub struct NonInteractingAdiabat {
    schedule: FrequencySchedule,
}

impl NonInteractingAdiabat {
    pub fn new(schedule: &FrequencySchedule) -> Result<Self> {
        check_positive(schedule)?;
        Ok(Self {
            schedule: *schedule,
        })
    }
}

impl ScalingPath for NonInteractingAdiabat {
    fn eval(&self, t: f64) -> PathPoint {
        let s = self.schedule.eval(t);
        let l = (self.schedule.omega0 / s.omega).map(|x| 0.5 * x.ln());
        let (r, rdot) = log_rates(&s);
        from_log(l, r * -0.5, rdot * -0.5)
    }

    fn duration(&self) -> f64 {
        self.schedule.tau
    }
}

/// Scale factors interpolated directly with the quintic smoothstep,
/// `b_j(t) = 1 + (b_j(tau) - 1) s(t/tau)`.
#[derive(Debug, Clone, Copy)]
pub struct SmoothstepPath {
    pub target_b: AxisTriple,
    pub tau: f64,
}

impl ScalingPath for SmoothstepPath {
    fn eval(&self, t: f64) -> PathPoint {
        let u = (t / self.tau).clamp(0.0, 1.0);
        let (s, ds, dds) = smoothstep(u);
        let delta = self.target_b - AxisTriple::ONE;
        PathPoint {
            b: AxisTriple::ONE + delta * s,
            bdot: delta * (ds / self.tau),
            bddot: delta * (dds / (self.tau * self.tau)),
        }
    }

    fn duration(&self) -> f64 {
        self.tau
    }
}
