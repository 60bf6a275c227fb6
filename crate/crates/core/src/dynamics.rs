//! Equations of motion for the scaling factors.
//!
//! All three regimes share the state `(b, bdot, C_Q)`:
//!
//! * ideal gas: `b''_j = w_j0^2 / b_j^3 - Omega_j^2 b_j`
//! * unitary:   `b''_j = w_j0^2 / (b_j Gamma^(2/3)) - Omega_j^2 b_j`
//! * viscous:   `b''_j = w_j0^2 (1 + C_Q) / (Gamma^(2/3) b_j)
//!               - hbar alpha sigma_jj / (m <x_j^2>_0 b_j) - Omega_j^2 b_j`,
//!   with `C_Q' = Gamma^(2/3) hbar alpha sum_j sigma_jj^2 / <r . grad U>_0`.

use crate::drive::{heating_rate, DriveSchedule};
use crate::error::{Result, StaError};
use crate::integrator::{Dopri5, IntegratorConfig};
use crate::model::{
    stress_diagonal, Axis, AxisTriple, GasSpec, IntegrationStats, Regime, ScalingState, StrokeSpec,
    Trajectory, HBAR,
};

/// Integration aborts once any scale factor drops to this value.
pub const COLLAPSE_GUARD: f64 = 1e-6;

#[derive(Clone, Copy)]
struct Equations {
    regime: Regime,
    omega0_sq: AxisTriple,
    gas: GasSpec,
}

impl Equations {
    fn new(spec: &StrokeSpec, gas: &GasSpec) -> Self {
        Self {
            regime: gas.regime,
            omega0_sq: spec.omega0 * spec.omega0,
            gas: *gas,
        }
    }

    fn rhs(&self, omega_sq: AxisTriple, y: &[f64; 7]) -> [f64; 7] {
        let b = AxisTriple::new(y[0], y[1], y[2]);
        let bdot = AxisTriple::new(y[3], y[4], y[5]);
        let cq = y[6];
        let restoring = omega_sq * b;
        let (accel, cq_rate) = match self.regime {
            Regime::NonInteracting => (self.omega0_sq / (b * b * b) - restoring, 0.0),
            Regime::Unitary => {
                let g23 = b.product().cbrt().powi(2);
                (self.omega0_sq / (b * g23) - restoring, 0.0)
            }
            Regime::ViscousUnitary => {
                let g23 = b.product().cbrt().powi(2);
                let pressure = self.omega0_sq * ((1.0 + cq) / g23) / b;
                if self.gas.alpha_s == 0.0 {
                    (pressure - restoring, 0.0)
                } else {
                    let rates = bdot / b;
                    let sigma = stress_diagonal(rates);
                    let damping = sigma * (HBAR * self.gas.alpha_s / self.gas.mass)
                        / (self.gas.initial_msq_sizes * b);
                    (
                        pressure - damping - restoring,
                        heating_rate(b, rates, &self.gas),
                    )
                }
            }
        };
        [bdot.x, bdot.y, bdot.z, accel.x, accel.y, accel.z, cq_rate]
    }
}

fn require(gas: &GasSpec, regime: Regime) -> Result<()> {
    if gas.regime == regime {
        Ok(())
    } else {
        Err(StaError::WrongRegime {
            expected: regime.name(),
        })
    }
}

/// Integrates from `start` over `[start.t, t_end]` under the squared
/// frequencies returned by `omega_sq(t)`, sampling on the configured grid.
fn evolve(
    spec: &StrokeSpec,
    gas: &GasSpec,
    start: ScalingState,
    t_end: f64,
    omega_sq: impl Fn(f64) -> AxisTriple,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let eq = Equations::new(spec, gas);
    let times = cfg.output_times(start.t, t_end)?;
    let solver = Dopri5::from(cfg);

    let mut stats = IntegrationStats::default();
    let mut last_cq = start.cq;
    let (ys, counts) = solver.solve(
        |t, y| eq.rhs(omega_sq(t), y),
        start.t,
        start.to_vec(),
        t_end,
        &times,
        |t, y| {
            for axis in Axis::ALL {
                let b = y[axis.index()];
                if !(b > COLLAPSE_GUARD) {
                    return Err(StaError::ScaleFactorCollapse { axis, t, value: b });
                }
            }
            let s = ScalingState::from_vec(t, y);
            stats.max_stress_trace = stats.max_stress_trace.max(s.stress().sum().abs());
            if s.cq < last_cq {
                stats.cq_decreased = true;
            }
            last_cq = s.cq;
            Ok(())
        },
    )?;
    stats.accepted_steps = counts.accepted;
    stats.rejected_steps = counts.rejected;

    let states: Vec<ScalingState> = times
        .iter()
        .zip(&ys)
        .map(|(&t, y)| ScalingState::from_vec(t, y))
        .collect();
    let drive_sq = times.iter().map(|&t| omega_sq(t)).collect();
    Ok(Trajectory {
        spec: *spec,
        gas: *gas,
        states,
        drive_sq,
        stats,
    })
}

fn integrate_stroke(
    drive: &DriveSchedule,
    spec: &StrokeSpec,
    gas: &GasSpec,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    evolve(
        spec,
        gas,
        ScalingState::INITIAL,
        spec.tau,
        |t| drive.omega_sq(t),
        cfg,
    )
}

/// Ideal Fermi gas: the three axes evolve independently.
pub fn integrate_noninteracting(
    drive: &DriveSchedule,
    spec: &StrokeSpec,
    gas: &GasSpec,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    require(gas, Regime::NonInteracting)?;
    integrate_stroke(drive, spec, gas, cfg)
}

/// Unitary gas: axes coupled through the volume factor.
pub fn integrate_unitary(
    drive: &DriveSchedule,
    spec: &StrokeSpec,
    gas: &GasSpec,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    require(gas, Regime::Unitary)?;
    integrate_stroke(drive, spec, gas, cfg)
}

/// Viscous unitary gas: seven-dimensional state including C_Q.
pub fn integrate_viscous(
    drive: &DriveSchedule,
    spec: &StrokeSpec,
    gas: &GasSpec,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    require(gas, Regime::ViscousUnitary)?;
    integrate_stroke(drive, spec, gas, cfg)
}

/// Dispatches on `gas.regime`.
pub fn integrate(
    drive: &DriveSchedule,
    spec: &StrokeSpec,
    gas: &GasSpec,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    integrate_stroke(drive, spec, gas, cfg)
}

/// Integrates from an arbitrary state under a drive given on
/// `[start.t, start.t + drive.tau]`, with the drive's clock starting at zero.
pub fn integrate_from(
    start: ScalingState,
    drive: &DriveSchedule,
    spec: &StrokeSpec,
    gas: &GasSpec,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let t0 = start.t;
    evolve(
        spec,
        gas,
        start,
        t0 + drive.tau,
        |t| drive.omega_sq(t - t0),
        cfg,
    )
}

fn continue_with(
    traj: &Trajectory,
    omega_sq: AxisTriple,
    duration: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    if !(duration > 0.0) {
        return Err(StaError::Config("continuation duration must be > 0".into()));
    }
    let start = *traj.last();
    let tail = evolve(
        &traj.spec,
        &traj.gas,
        start,
        start.t + duration,
        |_| omega_sq,
        cfg,
    )?;
    let mut out = traj.clone();
    out.extend_with(tail);
    Ok(out)
}

/// Free expansion after switching the trap off: the same equations with
/// `Omega_j = 0`. Viscous terms stay active for viscous gases. Returns the
/// input trajectory extended over `[t_end, t_end + duration]`.
pub fn tof_continuation(
    traj: &Trajectory,
    duration: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    continue_with(traj, AxisTriple::ZERO, duration, cfg)
}

/// Holds the trap at fixed squared frequencies after the stroke.
pub fn hold_continuation(
    traj: &Trajectory,
    omega_sq: AxisTriple,
    duration: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    continue_with(traj, omega_sq, duration, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drive::{lcd_isotropic_unitary, lcd_noninteracting};
    use crate::integrator::OutputGrid;
    use crate::model::{hz_to_rad, BOLTZMANN, LI6_MASS};
    use crate::schedule::{FrequencySchedule, SmoothstepPath};
    use std::sync::Arc;

    fn gas(regime: Regime, spec: &StrokeSpec) -> GasSpec {
        GasSpec::harmonic(regime, LI6_MASS, 0.78 * BOLTZMANN * 6.5e-6, spec.omega0)
    }

    fn iso230(tau: f64) -> StrokeSpec {
        StrokeSpec::new(
            AxisTriple::splat(hz_to_rad(230.0)),
            AxisTriple::splat(1.5),
            tau,
        )
    }

    #[test]
    fn constant_drive_is_stationary() {
        let spec = StrokeSpec::new(
            AxisTriple::new(825.0, 230.0, 230.0).map(hz_to_rad),
            AxisTriple::ONE,
            2e-3,
        );
        let drive = DriveSchedule::constant(spec.omega0 * spec.omega0, spec.tau);
        let cfg = IntegratorConfig::default();
        for regime in [
            Regime::NonInteracting,
            Regime::Unitary,
            Regime::ViscousUnitary,
        ] {
            let g = gas(regime, &spec);
            let traj = integrate(&drive, &spec, &g, &cfg).unwrap();
            for s in &traj.states {
                for axis in Axis::ALL {
                    assert!((s.b.get(axis) - 1.0).abs() < 1e-12);
                    assert!(s.bdot.get(axis).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn sudden_release_matches_closed_form() {
        let spec = iso230(5e-3);
        let w0 = spec.omega0.x;
        let g = gas(Regime::NonInteracting, &spec);
        let drive = DriveSchedule::constant(AxisTriple::ZERO, spec.tau);
        let traj =
            integrate_noninteracting(&drive, &spec, &g, &IntegratorConfig::default()).unwrap();
        for s in &traj.states {
            let exact = (1.0 + (w0 * s.t).powi(2)).sqrt();
            assert!((s.b.x / exact - 1.0).abs() < 1e-8, "t = {}", s.t);
        }
    }

    #[test]
    fn noninteracting_lcd_reaches_target() {
        let spec = iso230(1.25e-3);
        let g = gas(Regime::NonInteracting, &spec);
        let sched = FrequencySchedule::smoothstep(&spec);
        let path = Arc::new(SmoothstepPath {
            target_b: spec.target_b,
            tau: spec.tau,
        });
        let drive = lcd_noninteracting(&sched, path.clone()).unwrap();
        let traj =
            integrate_noninteracting(&drive, &spec, &g, &IntegratorConfig::default()).unwrap();
        for s in &traj.states {
            let p = crate::schedule::ScalingPath::eval(path.as_ref(), s.t);
            assert!((s.b - p.b).max().abs() < 1e-8);
        }
        let end = traj.last();
        assert!((end.b.x - 1.5).abs() < 1e-6);
        assert!(end.bdot.x.abs() < 1e-6 * spec.omega0.x);
    }

    #[test]
    fn isotropic_unitary_equals_noninteracting() {
        let spec = iso230(1.25e-3);
        let sched = FrequencySchedule::smoothstep(&spec);
        let drive = lcd_isotropic_unitary(&sched).unwrap();
        let cfg = IntegratorConfig::default();
        let u = integrate_unitary(&drive, &spec, &gas(Regime::Unitary, &spec), &cfg).unwrap();
        let n = integrate_noninteracting(&drive, &spec, &gas(Regime::NonInteracting, &spec), &cfg)
            .unwrap();
        for (a, b) in u.states.iter().zip(&n.states) {
            assert!(a.b.spread() < 1e-12);
            assert!((a.b.x - b.b.x).abs() < 1e-8);
        }
    }

    #[test]
    fn regime_mismatch_is_rejected() {
        let spec = iso230(1e-3);
        let drive = DriveSchedule::constant(spec.omega0 * spec.omega0, spec.tau);
        let cfg = IntegratorConfig::default();
        let g = gas(Regime::Unitary, &spec);
        assert!(matches!(
            integrate_viscous(&drive, &spec, &g, &cfg),
            Err(StaError::WrongRegime { .. })
        ));
        assert!(integrate_noninteracting(&drive, &spec, &g, &cfg).is_err());
    }

    #[test]
    fn strong_compression_collapse_is_reported() {
        // a sudden trap W >> w0 compresses the cloud to b ~ w0/W
        let spec = StrokeSpec::new(AxisTriple::splat(1.0), AxisTriple::ONE, 1.0);
        let g = gas(Regime::NonInteracting, &spec);
        let drive = DriveSchedule::constant(AxisTriple::splat(1e14), spec.tau);
        let err = integrate(&drive, &spec, &g, &IntegratorConfig::default()).unwrap_err();
        assert!(
            matches!(
                err,
                StaError::ScaleFactorCollapse { .. } | StaError::StepSizeUnderflow { .. }
            ),
            "{err:?}"
        );
    }

    #[test]
    fn unitary_isotropic_release_stays_isotropic() {
        let spec = iso230(1e-3);
        let g = gas(Regime::Unitary, &spec);
        let start = Trajectory::stationary(spec, g);
        let cfg = IntegratorConfig::default().with_output(OutputGrid::Uniform(101));
        let traj = tof_continuation(&start, 2e-3, &cfg).unwrap();
        assert_eq!(traj.len(), 101);
        for s in &traj.states {
            assert!(s.b.spread() < 1e-12);
        }
        let w0 = spec.omega0.x;
        let end = traj.last();
        assert!((end.b.x / (1.0 + (w0 * end.t).powi(2)).sqrt() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn hold_keeps_the_lcd_endpoint() {
        let spec = iso230(1.25e-3);
        let sched = FrequencySchedule::smoothstep(&spec);
        let drive = lcd_isotropic_unitary(&sched).unwrap();
        let cfg = IntegratorConfig::default();
        let g = gas(Regime::Unitary, &spec);
        let traj = integrate_unitary(&drive, &spec, &g, &cfg).unwrap();
        let w = sched.omega_final;
        let held = hold_continuation(&traj, w * w, 5e-3, &cfg).unwrap();
        assert_eq!(
            held.len(),
            2 * cfg.output_times(0.0, 1.0).unwrap().len() - 1
        );
        for s in held.states.iter().skip(traj.len()) {
            assert!((s.b.x - 1.5).abs() < 1e-6);
        }
    }

    #[test]
    fn identical_inputs_give_identical_bits() {
        let spec = iso230(1.25e-3);
        let sched = FrequencySchedule::smoothstep(&spec);
        let drive = lcd_isotropic_unitary(&sched).unwrap();
        let g = gas(Regime::Unitary, &spec);
        let cfg = IntegratorConfig::default();
        let a = integrate(&drive, &spec, &g, &cfg).unwrap();
        let b = integrate(&drive, &spec, &g, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
