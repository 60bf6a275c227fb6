//! Dormand–Prince 5(4) integrator with adaptive step control and the
//! fourth-order continuous extension used for sampling on an output grid.

use serde::{Deserialize, Serialize};

use crate::error::{Result, StaError};

/// Where the solution is sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputGrid {
    /// `n` equally spaced samples including both ends of the window.
    Uniform(usize),
    /// Explicit sample times; must be increasing and inside the window.
    Times(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Upper bound on the step [s]; unbounded when `None`.
    pub max_step: Option<f64>,
    pub output: OutputGrid,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            max_step: None,
            output: OutputGrid::Uniform(201),
        }
    }
}

impl IntegratorConfig {
    pub fn with_output(mut self, output: OutputGrid) -> Self {
        self.output = output;
        self
    }

    pub fn with_tolerances(mut self, rel_tol: f64, abs_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(StaError::Config("integrator tolerances must be > 0".into()));
        }
        if let Some(h) = self.max_step {
            if !(h > 0.0) {
                return Err(StaError::Config("max_step must be > 0".into()));
            }
        }
        match &self.output {
            OutputGrid::Uniform(n) if *n < 2 => Err(StaError::Config(
                "uniform output grid needs at least 2 samples".into(),
            )),
            OutputGrid::Times(ts) if ts.is_empty() => {
                Err(StaError::Config("output time list is empty".into()))
            }
            OutputGrid::Times(ts) if ts.windows(2).any(|w| !(w[1] > w[0])) => Err(
                StaError::Config("output times must be strictly increasing".into()),
            ),
            _ => Ok(()),
        }
    }

    /// Resolves the grid on `[t0, t1]`.
    pub fn output_times(&self, t0: f64, t1: f64) -> Result<Vec<f64>> {
        self.validate()?;
        match &self.output {
            OutputGrid::Uniform(n) => {
                let n = *n;
                let mut ts: Vec<f64> = (0..n)
                    .map(|i| t0 + (t1 - t0) * (i as f64) / ((n - 1) as f64))
                    .collect();
                ts[n - 1] = t1;
                Ok(ts)
            }
            OutputGrid::Times(ts) => {
                let slack = 1e-12 * (t1 - t0).abs().max(t1.abs());
                if ts.iter().any(|&t| t < t0 - slack || t > t1 + slack) {
                    return Err(StaError::Config(format!(
                        "output times must lie in [{t0:e}, {t1:e}]"
                    )));
                }
                Ok(ts.iter().map(|t| t.clamp(t0, t1)).collect())
            }
        }
    }
}

// Butcher tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// Fifth minus fourth order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Dense output.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const MAX_STEPS: usize = 5_000_000;

/// Counts reported by [`Dopri5::solve`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepCounts {
    pub accepted: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct Dopri5 {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: Option<f64>,
}

impl From<&IntegratorConfig> for Dopri5 {
    fn from(cfg: &IntegratorConfig) -> Self {
        Self {
            rel_tol: cfg.rel_tol,
            abs_tol: cfg.abs_tol,
            max_step: cfg.max_step,
        }
    }
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        *o += h * acc;
    }
    out
}

impl Dopri5 {
    /// Integrates `y' = f(t, y)` from `(t0, y0)` to `t1 > t0` and returns the
    /// solution at each time in `outputs` (increasing, inside `[t0, t1]`).
    ///
    /// `on_step` runs on every accepted step with the new time and state and
    /// may abort the integration by returning an error.
    pub fn solve<const N: usize, F, G>(
        &self,
        mut f: F,
        t0: f64,
        y0: [f64; N],
        t1: f64,
        outputs: &[f64],
        mut on_step: G,
    ) -> Result<(Vec<[f64; N]>, StepCounts)>
    where
        F: FnMut(f64, &[f64; N]) -> [f64; N],
        G: FnMut(f64, &[f64; N]) -> Result<()>,
    {
        assert!(t1 > t0, "integration window must have positive length");
        let span = t1 - t0;
        let h_max = self.max_step.unwrap_or(span).min(span);

        let mut out = Vec::with_capacity(outputs.len());
        let mut next_out = 0;
        while next_out < outputs.len() && outputs[next_out] <= t0 {
            out.push(y0);
            next_out += 1;
        }

        let mut t = t0;
        let mut y = y0;
        let mut k1 = f(t, &y);
        let mut h = self.initial_step(&mut f, t0, &y0, &k1, h_max);
        let mut counts = StepCounts::default();
        let mut last_rejected = false;

        while t < t1 {
            if counts.accepted + counts.rejected > MAX_STEPS {
                return Err(StaError::StepSizeUnderflow { t, h });
            }
            let h_floor = 16.0 * f64::EPSILON * t.abs().max(span);
            if h < h_floor {
                return Err(StaError::StepSizeUnderflow { t, h });
            }
            let last = t + h >= t1 || t1 - (t + h) < h_floor;
            if last {
                h = t1 - t;
            }

            let k2 = f(t + C2 * h, &axpy(&y, h, &[(A21, &k1)]));
            let k3 = f(t + C3 * h, &axpy(&y, h, &[(A31, &k1), (A32, &k2)]));
            let k4 = f(
                t + C4 * h,
                &axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]),
            );
            let k5 = f(
                t + C5 * h,
                &axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
            );
            let k6 = f(
                t + h,
                &axpy(
                    &y,
                    h,
                    &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
                ),
            );
            let y_new = axpy(
                &y,
                h,
                &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
            );
            let t_new = if last { t1 } else { t + h };
            let k7 = f(t_new, &y_new);

            let mut err_sq = 0.0;
            for i in 0..N {
                let e = h
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = self.abs_tol + self.rel_tol * y[i].abs().max(y_new[i].abs());
                err_sq += (e / sc) * (e / sc);
            }
            let err = (err_sq / N as f64).sqrt();

            if !err.is_finite() {
                counts.rejected += 1;
                last_rejected = true;
                h *= FAC_MIN;
                continue;
            }

            if err <= 1.0 {
                // dense output on (t, t_new]
                while next_out < outputs.len() && outputs[next_out] <= t_new {
                    let to = outputs[next_out];
                    if to == t_new {
                        out.push(y_new);
                    } else {
                        let theta = (to - t) / h;
                        let theta1 = 1.0 - theta;
                        let mut yi = [0.0; N];
                        for i in 0..N {
                            let dy = y_new[i] - y[i];
                            let bspl = h * k1[i] - dy;
                            let r4 = dy - h * k7[i] - bspl;
                            let r5 = h
                                * (D1 * k1[i]
                                    + D3 * k3[i]
                                    + D4 * k4[i]
                                    + D5 * k5[i]
                                    + D6 * k6[i]
                                    + D7 * k7[i]);
                            yi[i] =
                                y[i] + theta * (dy + theta1 * (bspl + theta * (r4 + theta1 * r5)));
                        }
                        out.push(yi);
                    }
                    next_out += 1;
                }

                t = t_new;
                y = y_new;
                k1 = k7;
                counts.accepted += 1;
                on_step(t, &y)?;

                let mut fac = SAFETY * err.max(1e-10).powf(-0.2);
                fac = fac.clamp(FAC_MIN, FAC_MAX);
                if last_rejected {
                    fac = fac.min(1.0);
                }
                last_rejected = false;
                h = (h * fac).min(h_max);
            } else {
                counts.rejected += 1;
                last_rejected = true;
                let fac = (SAFETY * err.powf(-0.2)).max(FAC_MIN);
                h *= fac;
            }
        }

        // outputs coinciding with t1 after rounding
        while out.len() < outputs.len() {
            out.push(y);
        }
        Ok((out, counts))
    }

    fn initial_step<const N: usize, F>(
        &self,
        f: &mut F,
        t0: f64,
        y0: &[f64; N],
        f0: &[f64; N],
        h_max: f64,
    ) -> f64
    where
        F: FnMut(f64, &[f64; N]) -> [f64; N],
    {
        let scale = |i: usize| self.abs_tol + self.rel_tol * y0[i].abs();
        let norm = |v: &[f64; N]| {
            (v.iter()
                .enumerate()
                .map(|(i, x)| (x / scale(i)).powi(2))
                .sum::<f64>()
                / N as f64)
                .sqrt()
        };
        let d0 = norm(y0);
        let d1 = norm(f0);
        let mut h0 = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6 * h_max
        } else {
            0.01 * d0 / d1
        };
        h0 = h0.min(h_max);
        let y1 = axpy(y0, h0, &[(1.0, f0)]);
        let f1 = f(t0 + h0, &y1);
        let mut diff = [0.0; N];
        for i in 0..N {
            diff[i] = f1[i] - f0[i];
        }
        let d2 = norm(&diff) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6 * h_max)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(h_max)
    }
}
