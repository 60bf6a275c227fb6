//! Shared domain types: per-axis triples, the stroke and gas specifications,
//! the scaling state and sampled trajectories.
//!
//! Every frequency held by these types is an angular frequency in rad/s.
//! Conversion from Hz happens once, at the configuration boundary, through
//! [`hz_to_rad`].

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Div, Index, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Result, StaError, Violation, Violations};

/// Reduced Planck constant [J s].
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant [J/K].
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Default atom mass: lithium-6 [kg].
pub const LI6_MASS: f64 = 9.988_34e-27;

pub fn hz_to_rad(hz: f64) -> f64 {
    2.0 * PI * hz
}

pub fn rad_to_hz(omega: f64) -> f64 {
    omega / (2.0 * PI)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        })
    }
}

/// One real number per Cartesian axis.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AxisTriple {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl AxisTriple {
    pub const ONE: AxisTriple = AxisTriple::splat(1.0);
    pub const ZERO: AxisTriple = AxisTriple::splat(0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub const fn splat(v: f64) -> Self {
        Self { x: v, y: v, z: v }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn get(&self, axis: Axis) -> f64 {
        self[axis.index()]
    }

    pub fn map(self, f: impl Fn(f64) -> f64) -> Self {
        Self::new(f(self.x), f(self.y), f(self.z))
    }

    pub fn zip_map(self, other: Self, f: impl Fn(f64, f64) -> f64) -> Self {
        Self::new(f(self.x, other.x), f(self.y, other.y), f(self.z, other.z))
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> {
        self.to_array().into_iter()
    }

    pub fn sum(&self) -> f64 {
        self.x + self.y + self.z
    }

    pub fn product(&self) -> f64 {
        self.x * self.y * self.z
    }

    pub fn min(&self) -> f64 {
        self.x.min(self.y).min(self.z)
    }

    pub fn max(&self) -> f64 {
        self.x.max(self.y).max(self.z)
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(f64::is_finite)
    }

    /// Largest pairwise difference between components.
    pub fn spread(&self) -> f64 {
        self.max() - self.min()
    }
}

impl Index<usize> for AxisTriple {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("axis index {i} out of range"),
        }
    }
}

impl Add for AxisTriple {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        self.zip_map(o, |a, b| a + b)
    }
}

impl Sub for AxisTriple {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self.zip_map(o, |a, b| a - b)
    }
}

impl Mul for AxisTriple {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        self.zip_map(o, |a, b| a * b)
    }
}

impl Div for AxisTriple {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        self.zip_map(o, |a, b| a / b)
    }
}

impl Mul<f64> for AxisTriple {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        self.map(|a| a * s)
    }
}

/// A single expansion or compression stroke.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrokeSpec {
    /// Trap frequencies at t = 0 [rad/s].
    pub omega0: AxisTriple,
    /// Nominal scale factors at t = tau; they fix the final frequencies.
    pub target_b: AxisTriple,
    /// Stroke duration [s].
    pub tau: f64,
}

impl StrokeSpec {
    pub fn new(omega0: AxisTriple, target_b: AxisTriple, tau: f64) -> Self {
        Self {
            omega0,
            target_b,
            tau,
        }
    }

    /// Builds a stroke from the initial and final trap frequencies, inverting
    /// `omega_final = omega0 / b^2`.
    pub fn from_final_frequencies(omega0: AxisTriple, omega_final: AxisTriple, tau: f64) -> Self {
        let target_b = omega0.zip_map(omega_final, |w0, w1| (w0 / w1).sqrt());
        Self::new(omega0, target_b, tau)
    }

    /// Final trap frequencies `omega0 / b(tau)^2` [rad/s].
    pub fn final_omega(&self) -> AxisTriple {
        self.omega0.zip_map(self.target_b, |w, b| w / (b * b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    NonInteracting,
    Unitary,
    ViscousUnitary,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::NonInteracting => "non-interacting",
            Regime::Unitary => "unitary",
            Regime::ViscousUnitary => "viscous-unitary",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Gas properties entering the equations of motion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GasSpec {
    pub regime: Regime,
    /// Atom mass [kg].
    pub mass: f64,
    /// Initial energy per particle [J].
    pub initial_energy: f64,
    /// Initial mean-square cloud sizes per axis [m^2].
    pub initial_msq_sizes: AxisTriple,
    /// Trap-averaged shear viscosity coefficient (dimensionless).
    pub alpha_s: f64,
    /// Initial virial `<r . grad U_total>` [J].
    pub virial_denominator: f64,
}

impl GasSpec {
    /// Gas with closures for the sizes and the virial: the harmonic virial
    /// gives `<r . grad U> = E`, and the potential energy `E/2` is shared
    /// evenly between axes, `m omega_j^2 <x_j^2> / 2 = E / 6`.
    pub fn harmonic(regime: Regime, mass: f64, initial_energy: f64, omega0: AxisTriple) -> Self {
        Self {
            regime,
            mass,
            initial_energy,
            initial_msq_sizes: omega0.map(|w| initial_energy / (3.0 * mass * w * w)),
            alpha_s: 0.0,
            virial_denominator: initial_energy,
        }
    }

    pub fn with_alpha_s(mut self, alpha_s: f64) -> Self {
        self.alpha_s = alpha_s;
        self
    }

    pub fn with_regime(mut self, regime: Regime) -> Self {
        self.regime = regime;
        self
    }

    /// Initial rms sizes `sqrt(<x_j^2>_0)` [m].
    pub fn initial_sizes(&self) -> AxisTriple {
        self.initial_msq_sizes.map(f64::sqrt)
    }
}

/// Collects every invariant violation of the pair. Returns the pair
/// unchanged when there are none.
pub fn validate_spec(spec: StrokeSpec, gas: GasSpec) -> Result<(StrokeSpec, GasSpec)> {
    let mut v = Vec::new();

    if !spec.omega0.is_finite() {
        v.push(Violation::NonFinite { field: "omega0" });
    }
    if !spec.target_b.is_finite() {
        v.push(Violation::NonFinite { field: "target_b" });
    }
    for axis in Axis::ALL {
        if spec.omega0.get(axis).is_finite() && spec.omega0.get(axis) <= 0.0 {
            v.push(Violation::NonPositiveFrequency { axis });
        }
        if spec.target_b.get(axis).is_finite() && spec.target_b.get(axis) <= 0.0 {
            v.push(Violation::NonPositiveTarget { axis });
        }
    }
    if !spec.tau.is_finite() {
        v.push(Violation::NonFinite { field: "tau" });
    } else if spec.tau <= 0.0 {
        v.push(Violation::NonPositiveDuration);
    }

    if !gas.mass.is_finite() || gas.mass <= 0.0 {
        v.push(Violation::NonPositiveMass);
    }
    if !gas.initial_energy.is_finite() || gas.initial_energy <= 0.0 {
        v.push(Violation::NonPositiveEnergy);
    }
    for axis in Axis::ALL {
        let s = gas.initial_msq_sizes.get(axis);
        if !s.is_finite() || s <= 0.0 {
            v.push(Violation::NonPositiveSize { axis });
        }
    }
    if !gas.alpha_s.is_finite() {
        v.push(Violation::NonFinite { field: "alpha_s" });
    } else if gas.alpha_s < 0.0 {
        v.push(Violation::NegativeViscosity);
    } else if gas.alpha_s != 0.0 && gas.regime != Regime::ViscousUnitary {
        v.push(Violation::ViscosityInWrongRegime);
    }
    if !gas.virial_denominator.is_finite() || gas.virial_denominator <= 0.0 {
        v.push(Violation::NonPositiveVirial);
    }

    if v.is_empty() {
        Ok((spec, gas))
    } else {
        Err(StaError::Invalid(Violations(v)))
    }
}

/// Dynamical state of the scaling reduction at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingState {
    pub t: f64,
    pub b: AxisTriple,
    pub bdot: AxisTriple,
    /// Viscous heating coefficient C_Q.
    pub cq: f64,
}

impl ScalingState {
    /// Stationary cloud in the initial trap.
    pub const INITIAL: ScalingState = ScalingState {
        t: 0.0,
        b: AxisTriple::ONE,
        bdot: AxisTriple::ZERO,
        cq: 0.0,
    };

    /// Scaling volume factor `b_x b_y b_z`.
    pub fn gamma(&self) -> f64 {
        self.b.product()
    }

    pub fn gamma_dot(&self) -> f64 {
        self.gamma() * self.log_rates().sum()
    }

    /// `bdot_j / b_j`.
    pub fn log_rates(&self) -> AxisTriple {
        self.bdot / self.b
    }

    /// Diagonal of the viscous stress tensor, `2 bdot_j/b_j - (2/3) Gammadot/Gamma`.
    pub fn stress(&self) -> AxisTriple {
        stress_diagonal(self.log_rates())
    }

    pub(crate) fn to_vec(self) -> [f64; 7] {
        [
            self.b.x,
            self.b.y,
            self.b.z,
            self.bdot.x,
            self.bdot.y,
            self.bdot.z,
            self.cq,
        ]
    }

    pub(crate) fn from_vec(t: f64, y: &[f64; 7]) -> Self {
        Self {
            t,
            b: AxisTriple::new(y[0], y[1], y[2]),
            bdot: AxisTriple::new(y[3], y[4], y[5]),
            cq: y[6],
        }
    }
}

pub(crate) fn stress_diagonal(log_rates: AxisTriple) -> AxisTriple {
    let div = log_rates.sum();
    log_rates.map(|r| 2.0 * r - 2.0 / 3.0 * div)
}

/// Step statistics collected while integrating.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IntegrationStats {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// Largest `|sum_j sigma_jj|` seen at any accepted step.
    pub max_stress_trace: f64,
    /// Set when C_Q decreased between two accepted steps.
    pub cq_decreased: bool,
}

impl IntegrationStats {
    pub(crate) fn merge(&mut self, other: &IntegrationStats) {
        self.accepted_steps += other.accepted_steps;
        self.rejected_steps += other.rejected_steps;
        self.max_stress_trace = self.max_stress_trace.max(other.max_stress_trace);
        self.cq_decreased |= other.cq_decreased;
    }
}

/// Time-ordered samples of the scaling state together with the squared
/// drive frequencies that acted at each sample time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub spec: StrokeSpec,
    pub gas: GasSpec,
    pub states: Vec<ScalingState>,
    /// Omega_j^2(t) at each sample [rad^2/s^2].
    pub drive_sq: Vec<AxisTriple>,
    pub stats: IntegrationStats,
}

impl Trajectory {
    /// The stationary starting point, a single sample at t = 0.
    pub fn stationary(spec: StrokeSpec, gas: GasSpec) -> Self {
        Self {
            spec,
            gas,
            states: vec![ScalingState::INITIAL],
            drive_sq: vec![spec.omega0 * spec.omega0],
            stats: IntegrationStats::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn first(&self) -> &ScalingState {
        &self.states[0]
    }

    pub fn last(&self) -> &ScalingState {
        self.states.last().expect("trajectory is never empty")
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.states.iter().map(|s| s.t)
    }

    /// Sample closest in time to `t`.
    pub fn nearest(&self, t: f64) -> &ScalingState {
        self.states
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
            .expect("trajectory is never empty")
    }

    /// Appends a continuation whose first sample duplicates our last one.
    pub(crate) fn extend_with(&mut self, other: Trajectory) {
        let skip = usize::from(other.states.first().is_some_and(|s| s.t <= self.last().t));
        self.states.extend(other.states.into_iter().skip(skip));
        self.drive_sq.extend(other.drive_sq.into_iter().skip(skip));
        self.stats.merge(&other.stats);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sec3_spec() -> StrokeSpec {
        StrokeSpec::new(
            AxisTriple::new(825.0, 230.0, 230.0).map(hz_to_rad),
            AxisTriple::splat(1.5),
            1250e-6,
        )
    }

    fn gas(regime: Regime, spec: &StrokeSpec) -> GasSpec {
        GasSpec::harmonic(regime, LI6_MASS, 0.75 * BOLTZMANN * 6.5e-6, spec.omega0)
    }

    #[test]
    fn sec3_preset_is_valid() {
        let spec = sec3_spec();
        let g = gas(Regime::Unitary, &spec);
        let (s2, g2) = validate_spec(spec, g).unwrap();
        assert_eq!(s2, spec);
        assert_eq!(g2, g);
        // idempotent
        assert_eq!(validate_spec(s2, g2).unwrap(), (spec, g));
    }

    #[test]
    fn zero_duration_is_rejected() {
        let mut spec = sec3_spec();
        spec.tau = 0.0;
        let g = gas(Regime::Unitary, &spec);
        match validate_spec(spec, g) {
            Err(StaError::Invalid(Violations(v))) => {
                assert_eq!(v, vec![Violation::NonPositiveDuration])
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn viscosity_outside_viscous_regime_is_rejected() {
        let spec = sec3_spec();
        let g = gas(Regime::Unitary, &spec).with_alpha_s(0.5);
        match validate_spec(spec, g) {
            Err(StaError::Invalid(Violations(v))) => {
                assert_eq!(v, vec![Violation::ViscosityInWrongRegime])
            }
            other => panic!("unexpected {other:?}"),
        }
        let g = g.with_regime(Regime::ViscousUnitary);
        assert!(validate_spec(spec, g).is_ok());
    }

    #[test]
    fn all_violations_are_reported_together() {
        let spec = StrokeSpec::new(AxisTriple::new(-1.0, 1.0, 0.0), AxisTriple::ONE, -1.0);
        let mut g = gas(Regime::NonInteracting, &sec3_spec());
        g.mass = 0.0;
        let Err(StaError::Invalid(Violations(v))) = validate_spec(spec, g) else {
            panic!("expected violations");
        };
        assert!(v.contains(&Violation::NonPositiveFrequency { axis: Axis::X }));
        assert!(v.contains(&Violation::NonPositiveFrequency { axis: Axis::Z }));
        assert!(v.contains(&Violation::NonPositiveDuration));
        assert!(v.contains(&Violation::NonPositiveMass));
        assert_eq!(v.len(), 4);
    }

    #[test]
    fn final_frequency_round_trip() {
        let spec = sec3_spec();
        let again = StrokeSpec::from_final_frequencies(spec.omega0, spec.final_omega(), spec.tau);
        for axis in Axis::ALL {
            assert!((again.target_b.get(axis) - 1.5).abs() < 1e-14);
        }
    }

    #[test]
    fn hz_round_trip_is_identity() {
        for hz in [0.0, 1.0, 230.0, 825.0, 5581.5, 1e6] {
            let back = rad_to_hz(hz_to_rad(hz));
            assert!((back - hz).abs() <= 1e-15 * hz.max(1.0));
        }
    }

    #[test]
    fn equipartition_defaults() {
        let spec = sec3_spec();
        let g = gas(Regime::Unitary, &spec);
        for axis in Axis::ALL {
            let w = spec.omega0.get(axis);
            let pot = 0.5 * g.mass * w * w * g.initial_msq_sizes.get(axis);
            assert!((pot / (g.initial_energy / 6.0) - 1.0).abs() < 1e-12);
        }
        assert_eq!(g.virial_denominator, g.initial_energy);
    }

    #[test]
    fn stress_is_traceless() {
        let s = ScalingState {
            t: 0.0,
            b: AxisTriple::new(1.3, 0.7, 2.0),
            bdot: AxisTriple::new(10.0, -3.0, 0.25),
            cq: 0.0,
        };
        assert!(s.stress().sum().abs() < 1e-12);
    }
}
