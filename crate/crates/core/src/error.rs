use std::fmt;

use thiserror::Error;

use crate::model::Axis;

/// A single broken invariant found while validating a stroke/gas pair.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonFinite { field: &'static str },
    NonPositiveFrequency { axis: Axis },
    NonPositiveTarget { axis: Axis },
    NonPositiveDuration,
    ViscosityInWrongRegime,
    NegativeViscosity,
    NonPositiveMass,
    NonPositiveEnergy,
    NonPositiveSize { axis: Axis },
    NonPositiveVirial,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonFinite { field } => write!(f, "{field} is not finite"),
            Violation::NonPositiveFrequency { axis } => {
                write!(f, "initial frequency on axis {axis} must be > 0")
            }
            Violation::NonPositiveTarget { axis } => {
                write!(f, "target scale factor on axis {axis} must be > 0")
            }
            Violation::NonPositiveDuration => write!(f, "stroke duration must be > 0"),
            Violation::ViscosityInWrongRegime => {
                write!(f, "alpha_s must be 0 unless the regime is viscous-unitary")
            }
            Violation::NegativeViscosity => write!(f, "alpha_s must be >= 0"),
            Violation::NonPositiveMass => write!(f, "mass must be > 0"),
            Violation::NonPositiveEnergy => write!(f, "initial energy must be > 0"),
            Violation::NonPositiveSize { axis } => {
                write!(f, "initial mean-square size on axis {axis} must be > 0")
            }
            Violation::NonPositiveVirial => write!(f, "virial denominator must be > 0"),
        }
    }
}

/// Every violation found in one validation pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Violations(pub Vec<Violation>);

impl fmt::Display for Violations {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum StaError {
    #[error("invalid stroke/gas specification: {0}")]
    Invalid(Violations),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("frequency on axis {axis} is not positive at t = {t:e} s")]
    FrequencyCrossesZero { axis: Axis, t: f64 },

    #[error("schedule is not isotropic in shape (relative deviation {deviation:e})")]
    NotIsotropicShape { deviation: f64 },

    #[error("state is not isotropic")]
    NotIsotropic,

    #[error("scale factor on axis {axis} is not positive at t = {t:e} s")]
    ScaleFactorNonPositive { axis: Axis, t: f64 },

    #[error("scale factor on axis {axis} collapsed to {value:e} at t = {t:e} s")]
    ScaleFactorCollapse { axis: Axis, t: f64, value: f64 },

    #[error("step size underflow at t = {t:e} s (h = {h:e} s)")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("operation requires the {expected} regime")]
    WrongRegime { expected: &'static str },

    #[error("profile grid half-width {half_width:e} is narrower than 4 sigma ({sigma:e})")]
    GridTooNarrow { half_width: f64, sigma: f64 },

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("profile has zero variance")]
    DegenerateProfile,

    #[error("Gaussian fit diverged after {iterations} iterations")]
    FitDiverged { iterations: usize },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<StaError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl StaError {
    pub fn context(self, context: impl Into<String>) -> Self {
        StaError::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Errors caused by bad input rather than by a numerical failure.
    pub fn is_validation(&self) -> bool {
        match self {
            StaError::Invalid(_)
            | StaError::Config(_)
            | StaError::NotIsotropicShape { .. }
            | StaError::NotIsotropic
            | StaError::WrongRegime { .. }
            | StaError::GridTooNarrow { .. }
            | StaError::InvalidProfile(_)
            | StaError::Json(_)
            | StaError::Csv(_)
            | StaError::Io(_) => true,
            StaError::Context { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}

pub type Result<T, E = StaError> = std::result::Result<T, E>;
