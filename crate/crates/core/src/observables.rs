//! Thermodynamic and geometric diagnostics of a trajectory: nonadiabatic
//! factor Q*, mean energy and work in units of the initial energy, and
//! cloud sizes with their aspect ratios.

use serde::{Deserialize, Serialize};

use crate::error::{Result, StaError};
use crate::model::{Axis, AxisTriple, GasSpec, Regime, ScalingState, Trajectory};
use crate::schedule::{adiabatic_reference, FrequencySchedule, ScalingPath, ScheduleSample};

/// Q* of a single ideal-gas degree of freedom against an explicit adiabat,
/// `b_ad^2 [1/(2b^2) + w^2 b^2/(2 w0^2) + bdot^2/(2 w0^2)]`.
pub fn axis_q_star(b: f64, bdot: f64, omega0: f64, omega_sq: f64, b_ad: f64) -> f64 {
    b_ad * b_ad * axis_energy(b, bdot, omega0, omega_sq)
}

/// Energy of one ideal-gas degree of freedom relative to its initial value.
fn axis_energy(b: f64, bdot: f64, omega0: f64, omega_sq: f64) -> f64 {
    let w0sq = omega0 * omega0;
    0.5 / (b * b) + 0.5 * omega_sq * b * b / w0sq + 0.5 * bdot * bdot / w0sq
}

/// Q* for an isotropic ideal-gas state with adiabat `b_ad = sqrt(w0/w)`.
pub fn q_star_noninteracting(state: &ScalingState, omega: f64, omega0: f64) -> Result<f64> {
    let tol = 1e-12 * state.b.max().abs().max(1.0);
    if state.b.spread() > tol || state.bdot.spread() > 1e-12 * state.bdot.max().abs().max(1.0) {
        return Err(StaError::NotIsotropic);
    }
    if !(omega > 0.0) {
        return Err(StaError::FrequencyCrossesZero {
            axis: Axis::X,
            t: state.t,
        });
    }
    let b_ad = (omega0 / omega).sqrt();
    Ok(axis_q_star(
        state.b.x,
        state.bdot.x,
        omega0,
        omega * omega,
        b_ad,
    ))
}

/// Energy of the unitary gas relative to its initial value,
/// `(1 + C_Q)/(2 Gamma^(2/3)) + (1/6) sum_j (bdot_j^2 + Omega_j^2 b_j^2)/w_j0^2`.
/// C_Q is zero outside the viscous regime.
pub fn unitary_energy(state: &ScalingState, omega_sq: AxisTriple, omega0: AxisTriple) -> f64 {
    let g23 = state.gamma().cbrt().powi(2);
    let kinetic_potential =
        (state.bdot * state.bdot + omega_sq * state.b * state.b) / (omega0 * omega0);
    (1.0 + state.cq) / (2.0 * g23) + kinetic_potential.sum() / 6.0
}

/// `Q* = Gamma_ad^(2/3) E(t)/E(0)` for the unitary gas.
pub fn q_star_unitary(
    state: &ScalingState,
    omega_sq: AxisTriple,
    omega0: AxisTriple,
    gamma_ad_two_thirds: f64,
) -> Result<f64> {
    if !(gamma_ad_two_thirds > 0.0 && gamma_ad_two_thirds.is_finite()) {
        return Err(StaError::FrequencyCrossesZero {
            axis: Axis::X,
            t: state.t,
        });
    }
    Ok(gamma_ad_two_thirds * unitary_energy(state, omega_sq, omega0))
}

/// Closed-form Q* along an exact isotropic LCD stroke,
/// `1 + (1/12) sum_j (w''_j/w_j^3 - w'_j^2/w_j^4)`.
pub fn isotropic_q_star_drive_form(sample: &ScheduleSample) -> f64 {
    let w = sample.omega;
    let w2 = w * w;
    let terms = sample.omega_ddot / (w2 * w) - sample.omega_dot * sample.omega_dot / (w2 * w2);
    1.0 + terms.sum() / 12.0
}

/// `(<H>, <W>)` in units of `<H(0)>` from Q* and the adiabatic factor
/// `b_ad^2` (or `Gamma_ad^(2/3)` at unitarity).
pub fn mean_energy_and_work(q_star: f64, adiabatic_factor: f64) -> (f64, f64) {
    let energy = q_star / adiabatic_factor;
    (energy, energy - 1.0)
}

/// Cloud sizes at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudSizes {
    pub t: f64,
    /// rms sizes [m]
    pub sizes: AxisTriple,
    /// sizes relative to t = 0
    pub dimensionless: AxisTriple,
    /// sigma_z / sigma_x (each relative to t = 0)
    pub ratio_zx: f64,
    /// sigma_r / sigma_z with r the x axis
    pub ratio_rz: f64,
}

fn sizes_of(state: &ScalingState, gas: &GasSpec) -> CloudSizes {
    let d = state.b;
    CloudSizes {
        t: state.t,
        sizes: d * gas.initial_sizes(),
        dimensionless: d,
        ratio_zx: d.z / d.x,
        ratio_rz: d.x / d.z,
    }
}

/// `sigma_j(t) = b_j(t) sigma_j(0)` along the trajectory.
pub fn cloud_sizes(traj: &Trajectory) -> Vec<CloudSizes> {
    traj.states.iter().map(|s| sizes_of(s, &traj.gas)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservableRecord {
    pub t: f64,
    /// Undefined while the trap is off.
    pub q_star: Option<f64>,
    /// units of <H(0)>
    pub mean_energy: f64,
    /// units of <H(0)>
    pub mean_work: f64,
    pub sizes: CloudSizes,
    pub cq: f64,
    pub stress: AxisTriple,
}

/// The adiabat used to normalize Q*: the reference schedule during the
/// stroke, and the final frequencies afterwards unless the trap is off.
pub struct AdiabatSource<'a> {
    pub schedule: &'a FrequencySchedule,
    /// False once the trap has been released.
    pub trap_on_after_stroke: bool,
}

fn adiabatic_factor(regime: Regime, schedule: &FrequencySchedule, t: f64) -> Result<AxisTriple> {
    // per-axis b_ad^2; at unitarity every axis carries Gamma_ad^(2/3)
    let t = t.clamp(0.0, schedule.tau);
    match regime {
        Regime::NonInteracting => {
            let w = schedule.omega(t);
            Ok(schedule.omega0 / w)
        }
        Regime::Unitary | Regime::ViscousUnitary => {
            let r = adiabatic_reference(schedule)?;
            let b = r.eval(t).b;
            Ok(AxisTriple::splat(b.product().cbrt().powi(2)))
        }
    }
}

/// Observables at every sample of a trajectory.
pub fn evaluate(traj: &Trajectory, adiabat: &AdiabatSource<'_>) -> Result<Vec<ObservableRecord>> {
    let omega0 = traj.spec.omega0;
    let regime = traj.gas.regime;
    let tau = adiabat.schedule.tau;
    traj.states
        .iter()
        .zip(&traj.drive_sq)
        .map(|(s, &w2)| {
            let trap_on = s.t <= tau || adiabat.trap_on_after_stroke;
            let factor = adiabatic_factor(regime, adiabat.schedule, s.t)?;
            let (q_star, energy) = match regime {
                Regime::NonInteracting => {
                    let per_axis = AxisTriple::new(
                        axis_energy(s.b.x, s.bdot.x, omega0.x, w2.x),
                        axis_energy(s.b.y, s.bdot.y, omega0.y, w2.y),
                        axis_energy(s.b.z, s.bdot.z, omega0.z, w2.z),
                    );
                    // equal initial energy per axis
                    let energy = per_axis.sum() / 3.0;
                    let adiabatic_energy = (AxisTriple::ONE / factor).sum() / 3.0;
                    (energy / adiabatic_energy, energy)
                }
                Regime::Unitary | Regime::ViscousUnitary => {
                    let q = q_star_unitary(s, w2, omega0, factor.x)?;
                    (q, q / factor.x)
                }
            };
            Ok(ObservableRecord {
                t: s.t,
                q_star: trap_on.then_some(q_star),
                mean_energy: energy,
                mean_work: energy - 1.0,
                sizes: sizes_of(s, &traj.gas),
                cq: s.cq,
                stress: s.stress(),
            })
        })
        .collect()
}
