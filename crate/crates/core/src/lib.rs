//! Shortcuts to adiabaticity for trapped Fermi gases.
//!
//! Builds trap-frequency schedules and their local counterdiabatic
//! corrections, integrates the scaling-factor equations of motion for the
//! ideal, unitary and viscous-unitary gas, and evaluates the diagnostics
//! (nonadiabatic factor, mean work, cloud sizes) that certify friction-free
//! strokes.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod drive;
pub mod dynamics;
pub mod error;
pub mod imaging;
pub mod integrator;
pub mod model;
pub mod observables;
pub mod runner;
pub mod scenario;
pub mod schedule;

pub use error::{Result, StaError};
pub use model::{
    hz_to_rad, rad_to_hz, validate_spec, Axis, AxisTriple, GasSpec, Regime, ScalingState,
    StrokeSpec, Trajectory,
};
