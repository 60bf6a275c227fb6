//! Scenario configuration: a JSON document describing one stroke, the gas,
//! the drive, what happens after the stroke, and optional parameter sweeps.
//! Frequencies are in Hz, times in seconds.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::drive::{
    lcd_anisotropic_unitary, lcd_isotropic_unitary, lcd_noninteracting, lcd_viscous_unitary,
    DriveSchedule, ISOTROPY_TOLERANCE,
};
use crate::error::{Result, StaError};
use crate::integrator::{IntegratorConfig, OutputGrid};
use crate::model::{
    hz_to_rad, validate_spec, AxisTriple, GasSpec, Regime, StrokeSpec, BOLTZMANN, LI6_MASS,
};
use crate::schedule::{adiabatic_reference, FrequencySchedule, NonInteractingAdiabat, PostStroke};

pub const DEFAULT_FERMI_TEMPERATURE_UK: f64 = 6.5;
pub const DEFAULT_STROKE_SAMPLES: usize = 201;
pub const DEFAULT_POST_SAMPLES: usize = 101;
pub const DEFAULT_DRIVE_SAMPLES: usize = 1001;

/// A scale factor given either for all axes at once or per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScaleFactor {
    Uniform(f64),
    PerAxis([f64; 3]),
}

impl ScaleFactor {
    pub fn triple(self) -> AxisTriple {
        match self {
            ScaleFactor::Uniform(b) => AxisTriple::splat(b),
            ScaleFactor::PerAxis(b) => AxisTriple::from_array(b),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasConfig {
    /// Particle mass [kg]; lithium-6 when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass_kg: Option<f64>,
    /// Initial energy per particle in units of the Fermi energy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_energy_ef: Option<f64>,
    /// Initial energy per particle [J]; overrides `initial_energy_ef`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_energy_j: Option<f64>,
    /// Fermi temperature [uK] fixing `E_F = k_B T_F`.
    #[serde(default = "default_fermi_temperature")]
    pub fermi_temperature_uk: f64,
    #[serde(default)]
    pub alpha_s: f64,
}

fn default_fermi_temperature() -> f64 {
    DEFAULT_FERMI_TEMPERATURE_UK
}

impl GasConfig {
    pub fn energy_j(&self) -> Result<f64> {
        match (self.initial_energy_j, self.initial_energy_ef) {
            (Some(e), _) => Ok(e),
            (None, Some(ef)) => Ok(ef * BOLTZMANN * self.fermi_temperature_uk * 1e-6),
            (None, None) => Err(StaError::Config(
                "gas needs initial_energy_ef or initial_energy_j".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DriveConfig {
    /// The smoothstep schedule applied as is.
    Reference,
    /// Local counterdiabatic correction of the smoothstep schedule, chosen
    /// to match the regime.
    Lcd,
    /// Piecewise-linear table of `Omega_j^2 / (2 pi)^2` [Hz^2] against time,
    /// read from a CSV file with columns `t_s, omega_sq_x_hz2,
    /// omega_sq_y_hz2, omega_sq_z_hz2`. Relative paths resolve against the
    /// scenario file.
    Table { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PostStrokeConfig {
    /// Keep the final trap on.
    Hold { duration_s: f64 },
    /// Switch the trap off and let the cloud expand.
    Tof { duration_s: f64 },
}

impl PostStrokeConfig {
    pub fn duration(self) -> f64 {
        match self {
            PostStrokeConfig::Hold { duration_s } | PostStrokeConfig::Tof { duration_s } => {
                duration_s
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Samples over the stroke, both ends included.
    #[serde(default = "default_stroke_samples")]
    pub stroke_samples: usize,
    /// Samples over the post-stroke stage, both ends included.
    #[serde(default = "default_post_samples")]
    pub post_samples: usize,
    /// Rows of the drive table.
    #[serde(default = "default_drive_samples")]
    pub drive_samples: usize,
}

fn default_stroke_samples() -> usize {
    DEFAULT_STROKE_SAMPLES
}

fn default_post_samples() -> usize {
    DEFAULT_POST_SAMPLES
}

fn default_drive_samples() -> usize {
    DEFAULT_DRIVE_SAMPLES
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            stroke_samples: DEFAULT_STROKE_SAMPLES,
            post_samples: DEFAULT_POST_SAMPLES,
            drive_samples: DEFAULT_DRIVE_SAMPLES,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abs_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_step_s: Option<f64>,
}

impl IntegratorOverrides {
    fn is_empty(&self) -> bool {
        self.rel_tol.is_none() && self.abs_tol.is_none() && self.max_step_s.is_none()
    }

    /// Fields set in `other` win.
    pub fn overlay(self, other: IntegratorOverrides) -> Self {
        Self {
            rel_tol: other.rel_tol.or(self.rel_tol),
            abs_tol: other.abs_tol.or(self.abs_tol),
            max_step_s: other.max_step_s.or(self.max_step_s),
        }
    }
}

/// Lists of values to scan. Members are the Cartesian product in the order
/// tau, alpha_s, target_b.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_s: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_s: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_b: Option<Vec<ScaleFactor>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Free-form description carried into the outputs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub regime: Regime,
    pub initial_frequency_hz: [f64; 3],
    /// Target scale factors; exclusive with `final_frequency_hz`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_b: Option<ScaleFactor>,
    /// Final trap frequencies; they fix `b = (omega_0 / omega_final)^(1/2)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_frequency_hz: Option<[f64; 3]>,
    pub tau_s: f64,
    pub gas: GasConfig,
    pub drive: DriveConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post_stroke: Option<PostStrokeConfig>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "IntegratorOverrides::is_empty")]
    pub integrator: IntegratorOverrides,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    /// Directory receiving this scenario's artifacts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Directory the scenario was loaded from; resolves table paths.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)?;
        s.check()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| StaError::from(e).context(format!("reading {}", path.display())))?;
        let mut s =
            Self::from_json(&text).map_err(|e| e.context(format!("parsing {}", path.display())))?;
        s.base_dir = path.parent().map(Path::to_path_buf);
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Structural checks that do not need the physics modules.
    pub fn check(&self) -> Result<()> {
        let cfg = |m: &str| Err(StaError::Config(format!("scenario '{}': {m}", self.name)));
        if self.name.trim().is_empty() {
            return Err(StaError::Config("scenario name is empty".into()));
        }
        if self
            .name
            .chars()
            .any(|c| !(c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.')))
        {
            return cfg("name may only contain ASCII letters, digits, '-', '_' and '.'");
        }
        match (self.target_b, self.final_frequency_hz) {
            (Some(_), Some(_)) => return cfg("give target_b or final_frequency_hz, not both"),
            (None, None) => return cfg("one of target_b or final_frequency_hz is required"),
            _ => {}
        }
        if let Some(post) = self.post_stroke {
            if !(post.duration() > 0.0) {
                return cfg("post_stroke duration must be > 0");
            }
        }
        if self.output.stroke_samples < 2 || self.output.post_samples < 2 {
            return cfg("output sample counts must be at least 2");
        }
        if self.output.drive_samples < 2 {
            return cfg("drive_samples must be at least 2");
        }
        if let Some(sweep) = &self.sweep {
            let lists = [
                sweep.tau_s.as_ref().map(Vec::len),
                sweep.alpha_s.as_ref().map(Vec::len),
                sweep.target_b.as_ref().map(Vec::len),
            ];
            if lists.contains(&Some(0)) {
                return cfg("sweep lists must be nonempty");
            }
            if lists.iter().all(Option::is_none) {
                return cfg("sweep has no axes");
            }
        }
        self.gas
            .energy_j()
            .map_err(|e| e.context(format!("scenario '{}'", self.name)))?;
        Ok(())
    }

    /// Stroke and gas, validated together.
    pub fn stroke_and_gas(&self) -> Result<(StrokeSpec, GasSpec)> {
        let omega0 = AxisTriple::from_array(self.initial_frequency_hz).map(hz_to_rad);
        let spec = match (self.target_b, self.final_frequency_hz) {
            (Some(b), None) => StrokeSpec::new(omega0, b.triple(), self.tau_s),
            (None, Some(f)) => StrokeSpec::from_final_frequencies(
                omega0,
                AxisTriple::from_array(f).map(hz_to_rad),
                self.tau_s,
            ),
            _ => {
                self.check()?;
                unreachable!("check rejects ambiguous targets")
            }
        };
        let mass = self.gas.mass_kg.unwrap_or(LI6_MASS);
        let gas = GasSpec::harmonic(self.regime, mass, self.gas.energy_j()?, omega0)
            .with_alpha_s(self.gas.alpha_s);
        validate_spec(spec, gas)
    }

    pub fn schedule(&self) -> Result<FrequencySchedule> {
        let (spec, _) = self.stroke_and_gas()?;
        let post = match self.post_stroke {
            Some(PostStrokeConfig::Tof { .. }) => PostStroke::Release,
            _ => PostStroke::Hold,
        };
        Ok(FrequencySchedule::smoothstep(&spec).with_post(post))
    }

    /// Integrator settings for the stroke, with `overrides` applied on top
    /// of the scenario's own.
    pub fn integrator_config(&self, overrides: IntegratorOverrides) -> Result<IntegratorConfig> {
        let o = self.integrator.overlay(overrides);
        let mut cfg = IntegratorConfig::default()
            .with_output(OutputGrid::Uniform(self.output.stroke_samples));
        if let Some(r) = o.rel_tol {
            cfg.rel_tol = r;
        }
        if let Some(a) = o.abs_tol {
            cfg.abs_tol = a;
        }
        cfg.max_step = o.max_step_s;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Builds the drive named in the configuration.
    pub fn build_drive(&self) -> Result<DriveSchedule> {
        let (spec, gas) = self.stroke_and_gas()?;
        let schedule = self.schedule()?;
        match &self.drive {
            DriveConfig::Reference => Ok(DriveSchedule::reference(&schedule)),
            DriveConfig::Lcd => match gas.regime {
                Regime::NonInteracting => {
                    let path = Arc::new(NonInteractingAdiabat::new(&schedule)?);
                    lcd_noninteracting(&schedule, path)
                }
                Regime::Unitary => {
                    if schedule.shape_anisotropy() <= ISOTROPY_TOLERANCE {
                        lcd_isotropic_unitary(&schedule)
                    } else {
                        lcd_anisotropic_unitary(&schedule)
                    }
                }
                Regime::ViscousUnitary => {
                    let path = Arc::new(adiabatic_reference(&schedule)?);
                    lcd_viscous_unitary(&schedule, &gas, path)
                }
            },
            DriveConfig::Table { path } => {
                let full = match &self.base_dir {
                    Some(dir) if path.is_relative() => dir.join(path),
                    _ => path.clone(),
                };
                read_drive_table(&full, spec.tau)
            }
        }
    }

    /// Sweep members as standalone scenarios without a sweep, named
    /// `<name>-<index>`. A scenario without a sweep expands to itself.
    pub fn expand(&self) -> Result<Vec<Scenario>> {
        self.check()?;
        let Some(sweep) = &self.sweep else {
            return Ok(vec![self.clone()]);
        };
        let taus = sweep.tau_s.clone().unwrap_or_else(|| vec![self.tau_s]);
        let alphas = sweep
            .alpha_s
            .clone()
            .unwrap_or_else(|| vec![self.gas.alpha_s]);
        let targets: Vec<Option<ScaleFactor>> = match &sweep.target_b {
            Some(list) => list.iter().copied().map(Some).collect(),
            None => vec![None],
        };
        let total = taus.len() * alphas.len() * targets.len();
        let width = total.to_string().len().max(2);
        let mut out = Vec::with_capacity(total);
        for &tau in &taus {
            for &alpha in &alphas {
                for &target in &targets {
                    let mut s = self.clone();
                    s.sweep = None;
                    s.name = format!("{}-{:0width$}", self.name, out.len());
                    s.tau_s = tau;
                    s.gas.alpha_s = alpha;
                    if let Some(b) = target {
                        s.target_b = Some(b);
                        s.final_frequency_hz = None;
                    }
                    out.push(s);
                }
            }
        }
        Ok(out)
    }
}

/// Rejects batches with repeated names.
pub fn check_unique_names(scenarios: &[Scenario]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for s in scenarios {
        if !seen.insert(s.name.as_str()) {
            return Err(StaError::Config(format!(
                "scenario name '{}' appears more than once in the batch",
                s.name
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct DriveRow {
    t_s: f64,
    omega_sq_x_hz2: f64,
    omega_sq_y_hz2: f64,
    omega_sq_z_hz2: f64,
}

/// Reads a drive table (Hz^2, signed) and converts it to rad^2/s^2.
/// Lines starting with `#` are ignored; extra columns are allowed.
pub fn read_drive_table(path: &Path, tau: f64) -> Result<DriveSchedule> {
    let ctx = |e: StaError| e.context(format!("drive table {}", path.display()));
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| ctx(e.into()))?;
    let scale = hz_to_rad(1.0).powi(2);
    let mut times = Vec::new();
    let mut values = Vec::new();
    for row in reader.deserialize::<DriveRow>() {
        let row = row.map_err(|e| ctx(e.into()))?;
        times.push(row.t_s);
        values.push(
            AxisTriple::new(row.omega_sq_x_hz2, row.omega_sq_y_hz2, row.omega_sq_z_hz2) * scale,
        );
    }
    DriveSchedule::table(times, values, tau).map_err(ctx)
}

/// Names of the built-in presets.
pub const PRESET_NAMES: [&str; 4] = [
    "sec3-isotropic",
    "sec4-isotropic",
    "sec4-anisotropic-lowT",
    "sec4-tof",
];

/// Built-in presets by the names in [`PRESET_NAMES`]; `sec4-anisotropic`
/// is accepted for the low-temperature anisotropic stroke.
pub fn preset(name: &str) -> Option<Scenario> {
    let base = |name: &str, regime, freq: [f64; 3], tau_s, energy_ef| Scenario {
        name: name.to_string(),
        label: None,
        regime,
        initial_frequency_hz: freq,
        target_b: None,
        final_frequency_hz: None,
        tau_s,
        gas: GasConfig {
            mass_kg: None,
            initial_energy_ef: Some(energy_ef),
            initial_energy_j: None,
            fermi_temperature_uk: DEFAULT_FERMI_TEMPERATURE_UK,
            alpha_s: 0.0,
        },
        drive: DriveConfig::Lcd,
        post_stroke: None,
        output: OutputConfig::default(),
        integrator: IntegratorOverrides::default(),
        sweep: None,
        output_dir: None,
        base_dir: None,
    };
    let cigar = [5581.5, 5581.5, 252.7];
    match name {
        "sec3-isotropic" => Some(Scenario {
            label: Some("isotropic expansion of a superfluid unitary gas, E = 0.75 E_F".into()),
            target_b: Some(ScaleFactor::Uniform(1.5)),
            ..base(
                "sec3-isotropic",
                Regime::Unitary,
                [825.0, 230.0, 230.0],
                1250e-6,
                0.75,
            )
        }),
        "sec4-isotropic" => Some(Scenario {
            label: Some("isotropic expansion of a viscous unitary gas, E = 2.47 E_F".into()),
            target_b: Some(ScaleFactor::Uniform(1.5)),
            integrator: IntegratorOverrides {
                rel_tol: Some(1e-12),
                abs_tol: Some(1e-15),
                max_step_s: None,
            },
            sweep: Some(Sweep {
                alpha_s: Some(vec![0.0, 5.0]),
                ..Sweep::default()
            }),
            ..base(
                "sec4-isotropic",
                Regime::ViscousUnitary,
                cigar,
                1.5e-3,
                2.47,
            )
        }),
        "sec4-anisotropic-lowT" | "sec4-anisotropic" => Some(Scenario {
            label: Some("anisotropic expansion at low temperature, E = 0.78 E_F".into()),
            final_frequency_hz: Some([2480.7, 2480.7, 208.8]),
            ..base(
                "sec4-anisotropic-lowT",
                Regime::Unitary,
                cigar,
                1.5e-3,
                0.78,
            )
        }),
        "sec4-tof" => Some(Scenario {
            label: Some(
                "release from the stationary cigar trap, 500 us expansion, E = 2.47 E_F".into(),
            ),
            target_b: Some(ScaleFactor::Uniform(1.0)),
            post_stroke: Some(PostStrokeConfig::Tof { duration_s: 500e-6 }),
            sweep: Some(Sweep {
                alpha_s: Some(vec![0.0, 1.0, 2.0, 5.0]),
                ..Sweep::default()
            }),
            ..base("sec4-tof", Regime::ViscousUnitary, cigar, 1.5e-3, 2.47)
        }),
        _ => None,
    }
}

/// Every built-in preset in [`PRESET_NAMES`] order.
pub fn presets() -> Vec<Scenario> {
    PRESET_NAMES
        .iter()
        .map(|n| preset(n).expect("listed preset exists"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> &'static str {
        r#"{
            "name": "demo",
            "regime": "unitary",
            "initial_frequency_hz": [825, 230, 230],
            "target_b": 1.5,
            "tau_s": 1.25e-3,
            "gas": { "initial_energy_ef": 0.75 },
            "drive": { "kind": "lcd" }
        }"#
    }

    #[test]
    fn minimal_scenario_parses_with_defaults() {
        let s = Scenario::from_json(minimal()).unwrap();
        assert_eq!(s.output, OutputConfig::default());
        assert_eq!(s.gas.fermi_temperature_uk, 6.5);
        assert_eq!(s.target_b, Some(ScaleFactor::Uniform(1.5)));
        let (spec, gas) = s.stroke_and_gas().unwrap();
        assert_eq!(spec.target_b, AxisTriple::splat(1.5));
        assert!((gas.initial_energy - 0.75 * BOLTZMANN * 6.5e-6).abs() < 1e-40);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = minimal().replace("\"tau_s\"", "\"tau\": 1, \"tau_s\"");
        assert!(Scenario::from_json(&text).is_err());
    }

    #[test]
    fn both_targets_are_rejected() {
        let text = minimal().replace(
            "\"target_b\": 1.5",
            "\"target_b\": 1.5, \"final_frequency_hz\": [1, 1, 1]",
        );
        let err = Scenario::from_json(&text).unwrap_err();
        assert!(err.is_validation());
    }

    #[test]
    fn empty_sweep_list_is_rejected() {
        let text = minimal().replace("\"tau_s\"", "\"sweep\": {\"alpha_s\": []}, \"tau_s\"");
        assert!(Scenario::from_json(&text).is_err());
    }

    #[test]
    fn sweep_expands_as_a_product() {
        let mut s = Scenario::from_json(minimal()).unwrap();
        s.regime = Regime::ViscousUnitary;
        s.sweep = Some(Sweep {
            tau_s: Some(vec![1e-3, 2e-3]),
            alpha_s: Some(vec![0.0, 1.0, 2.0]),
            target_b: None,
        });
        let members = s.expand().unwrap();
        assert_eq!(members.len(), 6);
        assert_eq!(members[0].name, "demo-00");
        assert_eq!(members[4].tau_s, 2e-3);
        assert_eq!(members[4].gas.alpha_s, 1.0);
        assert!(members.iter().all(|m| m.sweep.is_none()));
        check_unique_names(&members).unwrap();
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let s = Scenario::from_json(minimal()).unwrap();
        assert!(check_unique_names(&[s.clone(), s]).is_err());
    }

    #[test]
    fn presets_round_trip_through_json() {
        for p in presets() {
            let back = Scenario::from_json(&p.to_json()).unwrap();
            assert_eq!(back, p);
            p.stroke_and_gas().unwrap();
        }
        assert_eq!(preset("sec4-anisotropic"), preset("sec4-anisotropic-lowT"));
        assert!(preset("nope").is_none());
    }

    #[test]
    fn lcd_choice_follows_regime_and_shape() {
        use crate::drive::DriveKind;
        let iso = preset("sec3-isotropic").unwrap().build_drive().unwrap();
        assert_eq!(iso.kind, DriveKind::LcdIsotropic);
        let aniso = preset("sec4-anisotropic").unwrap().build_drive().unwrap();
        assert_eq!(aniso.kind, DriveKind::LcdUnitary);
        let visc = preset("sec4-isotropic").unwrap().build_drive().unwrap();
        assert_eq!(visc.kind, DriveKind::LcdViscous);
    }
}
