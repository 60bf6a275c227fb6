//! Synthetic 1-D density profiles, the `A0 + A1 exp(-x^2/sigma^2)` fit used on
//! time-of-flight images, and recovery of in-trap sizes from fitted ones.
//!
//! `sigma` is always the 1/e half-width of that model, never a standard
//! deviation.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dynamics::tof_continuation;
use crate::error::{Result, StaError};
use crate::integrator::{IntegratorConfig, OutputGrid};
use crate::model::{Axis, GasSpec, StrokeSpec, Trajectory};

pub const MIN_FIT_SAMPLES: usize = 8;
pub const MAX_FIT_ITERATIONS: usize = 200;
pub const FIT_STEP_TOLERANCE: f64 = 1e-8;
const POLISH_ITERATIONS: usize = 20;
const POLISH_STEP_TOLERANCE: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub axis: String,
    pub coordinates: Vec<f64>,
    pub values: Vec<f64>,
}

impl Profile {
    pub fn new(axis: impl Into<String>, coordinates: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if coordinates.len() != values.len() {
            return Err(StaError::InvalidProfile(format!(
                "{} coordinates but {} values",
                coordinates.len(),
                values.len()
            )));
        }
        if coordinates.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(StaError::InvalidProfile(
                "coordinates must be strictly increasing".into(),
            ));
        }
        if coordinates.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(StaError::InvalidProfile("non-finite sample".into()));
        }
        Ok(Self {
            axis: axis.into(),
            coordinates,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Multiplies every value by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            axis: self.axis.clone(),
            coordinates: self.coordinates.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    /// Reads a two-column CSV (position, value) with a one-line header. The
    /// header of the first column names the axis.
    pub fn read_csv(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let axis = rdr
            .headers()?
            .get(0)
            .map(str::to_owned)
            .unwrap_or_else(|| "x".into());
        let mut coordinates = Vec::new();
        let mut values = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(StaError::InvalidProfile(format!(
                    "row {} has {} columns, expected 2",
                    line + 2,
                    rec.len()
                )));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| StaError::InvalidProfile(format!("row {}: {s:?}: {e}", line + 2)))
            };
            coordinates.push(parse(&rec[0])?);
            values.push(parse(&rec[1])?);
        }
        Self::new(axis, coordinates, values)
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([self.axis.as_str(), "value"])?;
        for (x, v) in self.coordinates.iter().zip(&self.values) {
            w.write_record([x.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Symmetric uniform grid `[-half_width, half_width]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub half_width: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn coordinates(&self) -> Vec<f64> {
        let n = self.points.max(2);
        (0..n)
            .map(|i| -self.half_width + 2.0 * self.half_width * i as f64 / (n - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Noise {
    None,
    /// Additive white noise with standard deviation `A1 / snr`.
    Gaussian {
        snr: f64,
    },
}

pub fn gaussian_model(x: f64, a0: f64, a1: f64, sigma: f64) -> f64 {
    a0 + a1 * (-(x * x) / (sigma * sigma)).exp()
}

pub fn synthesize_profile(
    sigma_true: f64,
    a0: f64,
    a1: f64,
    grid: GridSpec,
    noise: Noise,
    seed: u64,
) -> Result<Profile> {
    if !(sigma_true > 0.0) {
        return Err(StaError::InvalidProfile("sigma must be > 0".into()));
    }
    if grid.half_width < 4.0 * sigma_true {
        return Err(StaError::GridTooNarrow {
            half_width: grid.half_width,
            sigma: sigma_true,
        });
    }
    let xs = grid.coordinates();
    let mut values: Vec<f64> = xs
        .iter()
        .map(|&x| gaussian_model(x, a0, a1, sigma_true))
        .collect();
    if let Noise::Gaussian { snr } = noise {
        if !(snr > 0.0) {
            return Err(StaError::InvalidProfile("snr must be > 0".into()));
        }
        let normal = Normal::new(0.0, a1.abs() / snr)
            .map_err(|e| StaError::InvalidProfile(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in &mut values {
            *v += normal.sample(&mut rng);
        }
    }
    Profile::new("x", xs, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub a0: f64,
    pub a1: f64,
    pub sigma: f64,
    /// Euclidean norm of the residual vector.
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
}

fn sum_sq_residual(p: &[f64; 3], xs: &[f64], ys: &[f64]) -> f64 {
    xs.iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let r = y - gaussian_model(x, p[0], p[1], p[2]);
            r * r
        })
        .sum()
}

/// Moment-based starting point: background from the minimum, amplitude from
/// the range, width from the second moment of the background-subtracted
/// signal (`<x^2> = sigma^2 / 2` for this model).
pub fn initial_guess(profile: &Profile) -> Result<[f64; 3]> {
    let min = profile.values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = profile
        .values
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if !(max > min) {
        return Err(StaError::DegenerateProfile);
    }
    let (mut w, mut wx2) = (0.0, 0.0);
    for (&x, &v) in profile.coordinates.iter().zip(&profile.values) {
        let s = v - min;
        w += s;
        wx2 += s * x * x;
    }
    let sigma = (2.0 * wx2 / w).sqrt();
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(StaError::DegenerateProfile);
    }
    Ok([min, max - min, sigma])
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&a);
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    let mut x = [0.0; 3];
    for (k, xk) in x.iter_mut().enumerate() {
        let mut m = a;
        for i in 0..3 {
            m[i][k] = b[i];
        }
        *xk = det(&m) / d;
    }
    Some(x)
}

fn normal_equations(p: &[f64; 3], xs: &[f64], ys: &[f64]) -> ([[f64; 3]; 3], [f64; 3]) {
    let mut jtj = [[0.0; 3]; 3];
    let mut jtr = [0.0; 3];
    for (&x, &y) in xs.iter().zip(ys) {
        let e = (-(x * x) / (p[2] * p[2])).exp();
        let r = y - (p[0] + p[1] * e);
        let j = [1.0, e, p[1] * e * 2.0 * x * x / (p[2] * p[2] * p[2])];
        for a in 0..3 {
            jtr[a] += j[a] * r;
            for b in 0..3 {
                jtj[a][b] += j[a] * j[b];
            }
        }
    }
    (jtj, jtr)
}

/// Damped Gauss-Newton (Levenberg) fit of `A0 + A1 exp(-x^2/sigma^2)`.
/// Damping starts at 1e-3, grows ×10 on a rejected step and shrinks ÷10
/// on an accepted one.
pub fn gaussian_fit(profile: &Profile, guess: Option<[f64; 3]>) -> Result<GaussianFit> {
    if profile.len() < MIN_FIT_SAMPLES {
        return Err(StaError::InvalidProfile(format!(
            "need at least {MIN_FIT_SAMPLES} samples, got {}",
            profile.len()
        )));
    }
    let start = initial_guess(profile)?;
    let mut p = guess.unwrap_or(start);
    let xs = &profile.coordinates;
    let ys = &profile.values;
    let mut sse = sum_sq_residual(&p, xs, ys);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let mut last_step = f64::INFINITY;

    while iterations < MAX_FIT_ITERATIONS {
        iterations += 1;
        let (jtj, jtr) = normal_equations(&p, xs, ys);

        let mut accepted = false;
        while lambda < 1e16 {
            let mut m = jtj;
            for (a, row) in m.iter_mut().enumerate() {
                row[a] += lambda * jtj[a][a];
            }
            let Some(delta) = solve3(m, jtr) else {
                lambda *= 10.0;
                continue;
            };
            let trial = [p[0] + delta[0], p[1] + delta[1], p[2] + delta[2]];
            let trial_sse = if trial[2] > 0.0 {
                sum_sq_residual(&trial, xs, ys)
            } else {
                f64::INFINITY
            };
            if trial_sse <= sse {
                let step = (0..3)
                    .map(|i| delta[i].abs() / trial[i].abs().max(f64::MIN_POSITIVE))
                    .fold(0.0, f64::max);
                p = trial;
                sse = trial_sse;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if step < FIT_STEP_TOLERANCE {
                    converged = true;
                }
                last_step = step;
                break;
            }
            lambda *= 10.0;
        }
        if !p.iter().all(|v| v.is_finite()) {
            return Err(StaError::FitDiverged { iterations });
        }
        if !accepted || sse == 0.0 {
            // no descent direction left: at a minimum to machine precision
            converged = true;
            break;
        }
        // keep polishing once converged; the last digits are cheap
        if last_step < POLISH_STEP_TOLERANCE {
            break;
        }
    }

    if converged {
        // undamped Gauss-Newton polish: the sse test cannot resolve the
        // last digits, so stop on the step size instead
        for _ in 0..POLISH_ITERATIONS {
            let (jtj, jtr) = normal_equations(&p, xs, ys);
            let Some(delta) = solve3(jtj, jtr) else { break };
            let trial = [p[0] + delta[0], p[1] + delta[1], p[2] + delta[2]];
            if !(trial[2] > 0.0) || !trial.iter().all(|v| v.is_finite()) {
                break;
            }
            let trial_sse = sum_sq_residual(&trial, xs, ys);
            if trial_sse > sse * (1.0 + 1e-10) + f64::MIN_POSITIVE {
                break;
            }
            let step = (0..3)
                .map(|i| delta[i].abs() / trial[i].abs().max(f64::MIN_POSITIVE))
                .fold(0.0, f64::max);
            p = trial;
            sse = trial_sse;
            if step < POLISH_STEP_TOLERANCE {
                break;
            }
        }
    }

    if !(p[2] > 0.0) || !p.iter().all(|v| v.is_finite()) {
        return Err(StaError::FitDiverged { iterations });
    }
    Ok(GaussianFit {
        a0: p[0],
        a1: p[1],
        sigma: p[2],
        residual_norm: sse.sqrt(),
        converged,
        iterations,
    })
}

/// In-trap size from an observed size and a trajectory ending at the
/// imaging time: `sigma_obs / b_j(t_end)`.
pub fn in_trap_size_from(observed_sigma: f64, tof: &Trajectory, axis: Axis) -> f64 {
    observed_sigma / tof.last().b.get(axis)
}

/// Runs the regime-appropriate free expansion from the stationary trap for
/// `t_tof` and divides the fitted size by the resulting scale factor.
pub fn infer_in_trap_size(
    observed: &GaussianFit,
    spec: &StrokeSpec,
    gas: &GasSpec,
    t_tof: f64,
    axis: Axis,
    cfg: &IntegratorConfig,
) -> Result<f64> {
    if t_tof == 0.0 {
        return Ok(observed.sigma);
    }
    let cfg = cfg.clone().with_output(OutputGrid::Uniform(2));
    let traj = tof_continuation(&Trajectory::stationary(*spec, *gas), t_tof, &cfg)?;
    Ok(in_trap_size_from(observed.sigma, &traj, axis))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{hz_to_rad, AxisTriple, Regime, BOLTZMANN, LI6_MASS};
    use proptest::prelude::*;

    fn grid() -> GridSpec {
        GridSpec {
            half_width: 5.0,
            points: 201,
        }
    }

    #[test]
    fn noiseless_profile_is_the_model() {
        let g = GridSpec {
            half_width: 4.0,
            points: 9,
        };
        let p = synthesize_profile(1.0, 0.0, 1.0, g, Noise::None, 0).unwrap();
        assert_eq!(p.coordinates[4], 0.0);
        assert_eq!(p.values[4], 1.0);
        assert!((p.values[5] - (-1.0f64).exp()).abs() < 1e-16);
        // half maximum at sigma sqrt(ln 2)
        let x_half = 2.0f64.ln().sqrt();
        assert!((gaussian_model(x_half, 0.0, 1.0, 1.0) - 0.5).abs() < 1e-15);
        assert!((x_half - 0.8326).abs() < 1e-4);
    }

    #[test]
    fn narrow_grid_is_rejected() {
        let g = GridSpec {
            half_width: 3.0,
            points: 100,
        };
        assert!(matches!(
            synthesize_profile(1.0, 0.0, 1.0, g, Noise::None, 0),
            Err(StaError::GridTooNarrow { .. })
        ));
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let n = Noise::Gaussian { snr: 20.0 };
        let a = synthesize_profile(1.0, 0.1, 2.0, grid(), n, 7).unwrap();
        let b = synthesize_profile(1.0, 0.1, 2.0, grid(), n, 7).unwrap();
        let c = synthesize_profile(1.0, 0.1, 2.0, grid(), n, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn exact_recovery_on_noiseless_data() {
        let p = synthesize_profile(1.0, 0.1, 2.0, grid(), Noise::None, 0).unwrap();
        let fit = gaussian_fit(&p, None).unwrap();
        assert!(fit.converged);
        assert!((fit.sigma - 1.0).abs() < 1e-8);
        assert!((fit.a0 - 0.1).abs() < 1e-8 * 0.1);
        assert!((fit.a1 - 2.0).abs() < 1e-8 * 2.0);
        assert!(fit.residual_norm < 1e-10);
    }

    #[test]
    fn flat_profile_is_degenerate() {
        let p = Profile::new("x", (0..20).map(f64::from).collect(), vec![3.0; 20]).unwrap();
        assert!(matches!(
            gaussian_fit(&p, None),
            Err(StaError::DegenerateProfile)
        ));
    }

    #[test]
    fn too_few_samples_are_rejected() {
        let p = Profile::new("x", vec![0.0, 1.0, 2.0], vec![1.0, 2.0, 1.0]).unwrap();
        assert!(gaussian_fit(&p, None).is_err());
    }

    #[test]
    fn profile_invariants() {
        assert!(Profile::new("x", vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(Profile::new("x", vec![0.0, 1.0], vec![1.0]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let p =
            synthesize_profile(1.0, 0.1, 2.0, grid(), Noise::Gaussian { snr: 20.0 }, 3).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x,value\n"));
        assert_eq!(Profile::read_csv(buf.as_slice()).unwrap(), p);
        assert!(Profile::read_csv("x,value\n1,2,3\n".as_bytes()).is_err());
        assert!(Profile::read_csv("x,value\n1,abc\n".as_bytes()).is_err());
    }

    #[test]
    fn zero_tof_keeps_size_and_closed_form_tof_recovers_it() {
        let spec = StrokeSpec::new(AxisTriple::splat(hz_to_rad(230.0)), AxisTriple::ONE, 1e-3);
        let gas = GasSpec::harmonic(
            Regime::NonInteracting,
            LI6_MASS,
            BOLTZMANN * 1e-6,
            spec.omega0,
        );
        let sigma0 = 12e-6;
        let t = 2e-3;
        let w0 = spec.omega0.x;
        let observed = GaussianFit {
            a0: 0.0,
            a1: 1.0,
            sigma: sigma0 * (1.0 + (w0 * t).powi(2)).sqrt(),
            residual_norm: 0.0,
            converged: true,
            iterations: 0,
        };
        let cfg = IntegratorConfig::default();
        let back = infer_in_trap_size(&observed, &spec, &gas, t, Axis::X, &cfg).unwrap();
        assert!((back / sigma0 - 1.0).abs() < 1e-8);
        let same = infer_in_trap_size(&observed, &spec, &gas, 0.0, Axis::X, &cfg).unwrap();
        assert_eq!(same, observed.sigma);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn noiseless_fit_is_exact(a0 in -1.0f64..1.0, a1 in 0.1f64..10.0, sigma in 0.3f64..1.2) {
            let p = synthesize_profile(sigma, a0, a1, grid(), Noise::None, 0).unwrap();
            let fit = gaussian_fit(&p, None).unwrap();
            prop_assert!(fit.residual_norm < 1e-10);
            prop_assert!((fit.sigma / sigma - 1.0).abs() < 1e-8);
        }

        #[test]
        fn amplitude_scaling_leaves_sigma(c in 0.01f64..100.0, seed in 0u64..1000) {
            let p = synthesize_profile(0.8, 0.2, 1.5, grid(), Noise::Gaussian { snr: 20.0 }, seed).unwrap();
            let f1 = gaussian_fit(&p, None).unwrap();
            let f2 = gaussian_fit(&p.scaled(c), None).unwrap();
            prop_assert!((f2.sigma / f1.sigma - 1.0).abs() < 1e-9);
            prop_assert!((f2.a1 / (c * f1.a1) - 1.0).abs() < 1e-9);
            prop_assert!((f2.a0 - c * f1.a0).abs() < 1e-9 * c * f1.a1.abs());
        }
    }
}
