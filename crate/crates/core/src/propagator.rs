//! Adaptive Dormand–Prince 5(4) integration of the master equation.
//!
//! The state is any number of stacked 6×6 blocks in flat row-major storage,
//! so the same stepper drives single density matrices, QRT objects and whole
//! superoperators. Integration is split at pulse-window edges and kick times;
//! the step cap applies only inside pulse windows.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{flat_to_op, op_to_flat, DensityMatrix, Drive, Generator, Op6, SystemConfig, ZERO};
use crate::pulses::Pulse;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PropagationSettings {
    pub rtol: f64,
    pub atol: f64,
    /// First trial step (ps).
    pub initial_step: f64,
    /// Largest step inside a pulse window (ps).
    pub max_step: f64,
    /// Interpolate output samples instead of stepping onto them.
    pub dense_output: bool,
}

impl Default for PropagationSettings {
    fn default() -> Self {
        PropagationSettings { rtol: 1e-8, atol: 1e-10, initial_step: 0.05, max_step: 1.25, dense_output: true }
    }
}

impl PropagationSettings {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("rtol", self.rtol), ("atol", self.atol)] {
            if !(v > 0.0 && v <= 1e-2) {
                return Err(Error::Settings(format!("{name} must lie in (0, 1e-2], got {v}")));
            }
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return Err(Error::Settings(format!("initial_step must be positive, got {}", self.initial_step)));
        }
        if !(self.max_step > 0.0 && self.max_step.is_finite()) {
            return Err(Error::Settings(format!("max_step must be positive, got {}", self.max_step)));
        }
        Ok(())
    }

    /// Checks the step cap against the narrowest pulse in `pulses`.
    pub fn validate_for(&self, pulses: &[Pulse]) -> Result<()> {
        self.validate()?;
        if let Some(w) = pulses.iter().map(|p| p.width).reduce(f64::min) {
            if self.max_step > w / 4.0 + 1e-12 {
                return Err(Error::Settings(format!(
                    "max_step {} ps exceeds a quarter of the shortest pulse width {} ps",
                    self.max_step, w
                )));
            }
        }
        Ok(())
    }
}

/// Samples of the state on an output grid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<DensityMatrix>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.time).collect()
    }

    pub fn last(&self) -> Option<&DensityMatrix> {
        self.samples.last()
    }
}

/// Counters from one integration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
}

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
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const EXPO: f64 = 0.2 - BETA * 0.75;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

struct Workspace {
    k: [Vec<Complex64>; 7],
    tmp: Vec<Complex64>,
    ynew: Vec<Complex64>,
    cont: [Vec<Complex64>; 5],
    couplings: Vec<crate::model::Coupling>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        let v = || vec![ZERO; n];
        Workspace {
            k: [v(), v(), v(), v(), v(), v(), v()],
            tmp: v(),
            ynew: v(),
            cont: [v(), v(), v(), v(), v()],
            couplings: Vec::new(),
        }
    }
}

/// Integrator bound to one system and one drive.
#[derive(Debug, Clone)]
pub struct Propagator {
    generator: Generator,
    settings: PropagationSettings,
}

impl Propagator {
    pub fn new(config: &SystemConfig, drive: &Drive, settings: PropagationSettings) -> Result<Self> {
        settings.validate()?;
        Ok(Propagator { generator: Generator::new(config, drive)?, settings })
    }

    pub fn settings(&self) -> &PropagationSettings {
        &self.settings
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    /// Evolves stacked blocks `y` from `t0` to `t1` in place.
    pub fn evolve(&self, y: &mut [Complex64], t0: f64, t1: f64) -> Result<StepStats> {
        self.evolve_sampled(y, t0, t1, &[], |_, _| {})
    }

    /// Evolves `y` and reports the state at each of `samples` (sorted, inside
    /// `[t0, t1]`). A sample at a kick time sees the state after the kick.
    pub fn evolve_sampled<F>(&self, y: &mut [Complex64], t0: f64, t1: f64, samples: &[f64], mut emit: F) -> Result<StepStats>
    where
        F: FnMut(f64, &[Complex64]),
    {
        if y.len() % 36 != 0 {
            return Err(Error::Input(format!("state length {} is not a multiple of 36", y.len())));
        }
        if !(t1 >= t0) {
            return Err(Error::Input(format!("t_end {t1} precedes t_start {t0}")));
        }
        if samples.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Input("sample times must be sorted".into()));
        }
        let mut next_sample = 0;
        while next_sample < samples.len() && samples[next_sample] <= t0 {
            if samples[next_sample] == t0 {
                emit(t0, y);
            }
            next_sample += 1;
        }
        let mut ws = Workspace::new(y.len());
        let mut stats = StepStats::default();
        let mut h = self.settings.initial_step;
        let mut edges = self.generator.breakpoints(t0, t1);
        edges.push(t1);
        let mut a = t0;
        for &b in &edges {
            if b > a {
                let active = self.generator.active_at(0.5 * (a + b));
                let cap = if active.is_empty() { f64::INFINITY } else { self.settings.max_step };
                h = h.min(cap);
                self.segment(y, a, b, &active, cap, &mut h, &mut ws, &mut stats, samples, &mut next_sample, &mut emit)?;
            }
            for kick in self.generator.kicks_in(a, b) {
                crate::model::apply_unitary(&kick.unitary, y);
            }
            while next_sample < samples.len() && samples[next_sample] <= b {
                emit(samples[next_sample], y);
                next_sample += 1;
            }
            a = b;
        }
        Ok(stats)
    }

    #[allow(clippy::too_many_arguments)]
    fn segment<F>(
        &self,
        y: &mut [Complex64],
        a: f64,
        b: f64,
        active: &[usize],
        cap: f64,
        h: &mut f64,
        ws: &mut Workspace,
        stats: &mut StepStats,
        samples: &[f64],
        next_sample: &mut usize,
        emit: &mut F,
    ) -> Result<()>
    where
        F: FnMut(f64, &[Complex64]),
    {
        let n = y.len();
        let (rtol, atol) = (self.settings.rtol, self.settings.atol);
        let gen = &self.generator;
        let mut t = a;
        let mut fac_old: f64 = 1e-4;
        let mut reject = false;
        gen.rhs_into(t, active, y, &mut ws.k[0], &mut ws.couplings);
        while t < b {
            if *h < 1e-12 * t.abs().max(1.0) {
                return Err(Error::StepSizeUnderflow { time: t, step: *h });
            }
            let remaining = b - t;
            let mut step = h.min(cap);
            let mut land = false;
            let mut hit_sample = None;
            if step >= remaining || remaining - step < 1e-6 * step {
                step = remaining;
                land = true;
            }
            if !self.settings.dense_output && *next_sample < samples.len() && samples[*next_sample] < b {
                let target = samples[*next_sample] - t;
                if target > 0.0 && step >= target {
                    step = target;
                    land = false;
                    hit_sample = Some(samples[*next_sample]);
                }
            }

            let k = &mut ws.k;
            let tmp = &mut ws.tmp;
            for i in 0..n {
                tmp[i] = y[i] + k[0][i] * (step * A21);
            }
            let (head, tail) = k.split_at_mut(1);
            gen.rhs_into(t + C2 * step, active, tmp, &mut tail[0], &mut ws.couplings);
            for i in 0..n {
                tmp[i] = y[i] + (head[0][i] * A31 + tail[0][i] * A32) * step;
            }
            gen.rhs_into(t + C3 * step, active, tmp, &mut tail[1], &mut ws.couplings);
            for i in 0..n {
                tmp[i] = y[i] + (head[0][i] * A41 + tail[0][i] * A42 + tail[1][i] * A43) * step;
            }
            gen.rhs_into(t + C4 * step, active, tmp, &mut tail[2], &mut ws.couplings);
            for i in 0..n {
                tmp[i] = y[i] + (head[0][i] * A51 + tail[0][i] * A52 + tail[1][i] * A53 + tail[2][i] * A54) * step;
            }
            gen.rhs_into(t + C5 * step, active, tmp, &mut tail[3], &mut ws.couplings);
            for i in 0..n {
                tmp[i] = y[i]
                    + (head[0][i] * A61 + tail[0][i] * A62 + tail[1][i] * A63 + tail[2][i] * A64 + tail[3][i] * A65)
                        * step;
            }
            gen.rhs_into(t + step, active, tmp, &mut tail[4], &mut ws.couplings);
            let ynew = &mut ws.ynew;
            for i in 0..n {
                ynew[i] = y[i]
                    + (head[0][i] * A71 + tail[1][i] * A73 + tail[2][i] * A74 + tail[3][i] * A75 + tail[4][i] * A76)
                        * step;
            }
            gen.rhs_into(t + step, active, ynew, &mut tail[5], &mut ws.couplings);

            let mut err_sq = 0.0;
            for i in 0..n {
                let e = (head[0][i] * E1
                    + tail[1][i] * E3
                    + tail[2][i] * E4
                    + tail[3][i] * E5
                    + tail[4][i] * E6
                    + tail[5][i] * E7)
                    * step;
                let sc = atol + rtol * y[i].norm().max(ynew[i].norm());
                err_sq += (e.norm() / sc).powi(2);
            }
            let err = (err_sq / n as f64).sqrt();

            if err.is_finite() && err <= 1.0 {
                stats.accepted += 1;
                let fac11 = err.powf(EXPO);
                let fac = (fac11 / fac_old.powf(BETA) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
                let mut hnew = step / fac;
                if reject {
                    hnew = hnew.min(step);
                }
                fac_old = err.max(1e-4);
                reject = false;

                let t_new = if land { b } else { hit_sample.unwrap_or(t + step) };
                if self.settings.dense_output && *next_sample < samples.len() && samples[*next_sample] < t_new {
                    let c = &mut ws.cont;
                    for i in 0..n {
                        let dy = ynew[i] - y[i];
                        let bspl = head[0][i] * step - dy;
                        c[0][i] = y[i];
                        c[1][i] = dy;
                        c[2][i] = bspl;
                        c[3][i] = dy - tail[5][i] * step - bspl;
                        c[4][i] = (head[0][i] * D1
                            + tail[1][i] * D3
                            + tail[2][i] * D4
                            + tail[3][i] * D5
                            + tail[4][i] * D6
                            + tail[5][i] * D7)
                            * step;
                    }
                    while *next_sample < samples.len() && samples[*next_sample] < t_new {
                        let s = samples[*next_sample];
                        let th = (s - t) / step;
                        let th1 = 1.0 - th;
                        for i in 0..n {
                            tmp[i] = c[0][i] + (c[1][i] + (c[2][i] + (c[3][i] + c[4][i] * th1) * th) * th1) * th;
                        }
                        emit(s, tmp);
                        *next_sample += 1;
                    }
                }
                y.copy_from_slice(ynew);
                std::mem::swap(&mut head[0], &mut tail[5]);
                t = t_new;
                if !self.settings.dense_output {
                    while *next_sample < samples.len() && samples[*next_sample] <= t && samples[*next_sample] < b {
                        emit(samples[*next_sample], y);
                        *next_sample += 1;
                    }
                }
                if !land && hit_sample.is_none() {
                    *h = hnew;
                }
            } else {
                stats.rejected += 1;
                let shrink = if err.is_finite() { (err.powf(EXPO) / SAFETY).min(1.0 / FAC_MIN) } else { 10.0 };
                *h = step / shrink;
                reject = true;
            }
        }
        Ok(())
    }

    /// Samples ρ(t) on `times` (sorted; the first entry is the start time).
    pub fn trajectory(&self, rho0: &DensityMatrix, times: &[f64]) -> Result<Trajectory> {
        let Some(&t_end) = times.last() else {
            return Ok(Trajectory::default());
        };
        let mut y = rho0.to_flat().to_vec();
        let mut samples = Vec::with_capacity(times.len());
        self.evolve_sampled(&mut y, rho0.time, t_end, times, |t, s| samples.push(DensityMatrix::from_flat(s, t)))?;
        Ok(Trajectory { samples })
    }

    /// Final state at `t_end`.
    pub fn final_state(&self, rho0: &DensityMatrix, t_end: f64) -> Result<DensityMatrix> {
        let mut y = rho0.to_flat().to_vec();
        self.evolve(&mut y, rho0.time, t_end)?;
        Ok(DensityMatrix::from_flat(&y, t_end))
    }

    /// Evolves `left · m · right` from `t0` to `t1` (`None` means identity).
    pub fn conditional(&self, left: Option<&Op6>, right: Option<&Op6>, m: &Op6, t0: f64, t1: f64) -> Result<Op6> {
        let mut x = *m;
        if let Some(l) = left {
            x = l * x;
        }
        if let Some(r) = right {
            x *= r;
        }
        let mut y = op_to_flat(&x).to_vec();
        self.evolve(&mut y, t0, t1)?;
        Ok(flat_to_op(&y))
    }
}

/// Propagates `rho0` from `t_start` to `t_end`; the trajectory holds both ends.
pub fn propagate(
    rho0: &DensityMatrix,
    t_start: f64,
    t_end: f64,
    config: &SystemConfig,
    pulses: &[Pulse],
    settings: &PropagationSettings,
) -> Result<Trajectory> {
    let p = Propagator::new(config, &Drive::from_pulses(pulses.to_vec()), *settings)?;
    let start = DensityMatrix { matrix: rho0.matrix, time: t_start };
    p.trajectory(&start, &[t_start, t_end])
}

/// Evolves `op_left · rho · op_right` forward under the same generator as
/// [`propagate`]; the input need not be Hermitian or normalized.
#[allow(clippy::too_many_arguments)]
pub fn propagate_conditional(
    op_left: Option<&Op6>,
    op_right: Option<&Op6>,
    rho: &Op6,
    t_start: f64,
    t_end: f64,
    config: &SystemConfig,
    pulses: &[Pulse],
    settings: &PropagationSettings,
) -> Result<Op6> {
    let p = Propagator::new(config, &Drive::from_pulses(pulses.to_vec()), *settings)?;
    p.conditional(op_left, op_right, rho, t_start, t_end)
}
