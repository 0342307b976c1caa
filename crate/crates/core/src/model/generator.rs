//! Compiled Lindblad generator working on flat row-major 6×6 blocks.
//!
//! This is the hot path of every propagation. It evaluates the same master
//! equation as [`super::lindblad_rhs`] without allocating, and it works on any
//! number of stacked 6×6 blocks so that a whole superoperator (36 blocks) can
//! be propagated in one sweep.

use num_complex::Complex64;

use super::{build_lindblad_channels, op_to_flat, Op6, SystemConfig, HBAR, ZERO};
use crate::error::{Error, Result};
use crate::pulses::Pulse;

/// An instantaneous unitary applied to the state at `time` (ρ → UρU†).
#[derive(Debug, Clone, PartialEq)]
pub struct Kick {
    pub time: f64,
    pub unitary: Op6,
}

/// Everything that drives the emitter: shaped pulses plus idealized kicks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Drive {
    pub pulses: Vec<Pulse>,
    pub kicks: Vec<Kick>,
}

impl Drive {
    pub fn from_pulses(pulses: Vec<Pulse>) -> Self {
        Drive { pulses, kicks: Vec::new() }
    }
}

#[derive(Debug, Clone)]
struct Link {
    upper: usize,
    lower: usize,
    /// Extra phase rate (ps⁻¹) of a non-addressed upper state.
    shift: f64,
    weight: f64,
}

#[derive(Debug, Clone)]
struct CompiledPulse {
    center: f64,
    sigma: f64,
    peak: f64,
    det_rate: f64,
    theta: f64,
    lo: f64,
    hi: f64,
    links: Vec<Link>,
}

/// One non-zero element ⟨upper|H|lower⟩/ħ in ps⁻¹.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Coupling {
    pub upper: usize,
    pub lower: usize,
    pub value: Complex64,
}

#[derive(Debug, Clone)]
pub struct Generator {
    diag: [f64; 36],
    jumps: Vec<(usize, usize, f64)>,
    pulses: Vec<CompiledPulse>,
    kicks: Vec<Kick>,
}

impl Generator {
    pub fn new(config: &SystemConfig, drive: &Drive) -> Result<Self> {
        let channels = build_lindblad_channels(config)?;
        let mut decay = [0.0; 6];
        let mut diag = [0.0; 36];
        let mut jumps = Vec::new();
        for ch in &channels {
            let o = op_to_flat(&(ch.operator / Complex64::new(HBAR.sqrt(), 0.0)));
            for a in 0..6 {
                for j in 0..6 {
                    decay[a] += o[6 * j + a].norm_sqr();
                }
            }
            let off: Vec<(usize, usize)> = (0..6)
                .flat_map(|r| (0..6).map(move |c| (r, c)))
                .filter(|&(r, c)| r != c && o[6 * r + c].norm() > 0.0)
                .collect();
            let is_diagonal = off.is_empty();
            if is_diagonal {
                for a in 0..6 {
                    for b in 0..6 {
                        diag[6 * a + b] += (o[7 * a] * o[7 * b].conj()).re;
                    }
                }
            } else if off.len() == 1 && (0..6).all(|a| o[7 * a] == ZERO) {
                let (to, from) = off[0];
                jumps.push((to, from, o[6 * to + from].norm_sqr()));
            } else {
                return Err(Error::Config(format!("unsupported jump operator shape for {}", ch.label)));
            }
        }
        for a in 0..6 {
            for b in 0..6 {
                diag[6 * a + b] -= 0.5 * (decay[a] + decay[b]);
            }
        }

        let mut pulses = Vec::with_capacity(drive.pulses.len());
        for p in &drive.pulses {
            p.validate()?;
            let addressed = p.transition.addressed();
            let links = p
                .couplings()
                .into_iter()
                .map(|(upper, weight)| Link {
                    upper: upper.index(),
                    lower: p.transition.lower().index(),
                    shift: (config.energy(upper) - config.energy(addressed)) / HBAR,
                    weight,
                })
                .collect();
            let (lo, hi) = p.support();
            pulses.push(CompiledPulse {
                center: p.center,
                sigma: p.sigma(),
                peak: p.amplitude * p.sigma(),
                det_rate: p.detuning / HBAR,
                theta: p.phase,
                lo,
                hi,
                links,
            });
        }
        let mut kicks = drive.kicks.clone();
        kicks.sort_by(|a, b| a.time.total_cmp(&b.time));
        Ok(Generator { diag, jumps, pulses, kicks })
    }

    /// Window edges and kick times strictly inside `(a, b)`, sorted.
    pub fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        let mut pts: Vec<f64> = self
            .pulses
            .iter()
            .flat_map(|p| [p.lo, p.hi])
            .chain(self.kicks.iter().map(|k| k.time))
            .filter(|&t| t > a && t < b)
            .collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// Indices of pulses whose window contains `t`.
    pub fn active_at(&self, t: f64) -> Vec<usize> {
        self.pulses
            .iter()
            .enumerate()
            .filter(|(_, p)| t >= p.lo && t <= p.hi)
            .map(|(i, _)| i)
            .collect()
    }

    /// Kicks with `a < time <= b`, in time order.
    pub fn kicks_in(&self, a: f64, b: f64) -> impl Iterator<Item = &Kick> {
        self.kicks.iter().filter(move |k| k.time > a && k.time <= b)
    }

    pub fn kicks(&self) -> &[Kick] {
        &self.kicks
    }

    pub(crate) fn couplings(&self, t: f64, active: &[usize], out: &mut Vec<Coupling>) {
        out.clear();
        for &i in active {
            let p = &self.pulses[i];
            let s = t - p.center;
            if s < p.lo - p.center || s > p.hi - p.center {
                continue;
            }
            let env = p.peak / (p.sigma * s).cosh();
            for l in &p.links {
                let phase = (p.det_rate + l.shift) * s - p.theta;
                out.push(Coupling {
                    upper: l.upper,
                    lower: l.lower,
                    value: Complex64::from_polar(env * l.weight, phase),
                });
            }
        }
    }

    /// dy/dt for every stacked 6×6 block in `y`; `scratch` is reused.
    pub(crate) fn rhs_into(
        &self,
        t: f64,
        active: &[usize],
        y: &[Complex64],
        dy: &mut [Complex64],
        scratch: &mut Vec<Coupling>,
    ) {
        self.couplings(t, active, scratch);
        for (yb, db) in y.chunks_exact(36).zip(dy.chunks_exact_mut(36)) {
            for k in 0..36 {
                db[k] = yb[k] * self.diag[k];
            }
            for &(to, from, r) in &self.jumps {
                db[7 * to] += yb[7 * from] * r;
            }
            for c in scratch.iter() {
                let (u, l) = (c.upper, c.lower);
                let mv = Complex64::new(c.value.im, -c.value.re);
                let mvc = Complex64::new(-c.value.im, -c.value.re);
                for b in 0..6 {
                    db[6 * u + b] += mv * yb[6 * l + b];
                    db[6 * l + b] += mvc * yb[6 * u + b];
                }
                for a in 0..6 {
                    db[6 * a + l] -= mv * yb[6 * a + u];
                    db[6 * a + u] -= mvc * yb[6 * a + l];
                }
            }
        }
    }

    /// Convenience wrapper evaluating dρ/dt for one block.
    pub fn rhs(&self, t: f64, y: &[Complex64], dy: &mut [Complex64]) {
        let active = self.active_at(t);
        let mut scratch = Vec::new();
        self.rhs_into(t, &active, y, dy, &mut scratch);
    }
}

/// ρ → UρU† on every stacked block.
pub(crate) fn apply_unitary(u: &Op6, y: &mut [Complex64]) {
    let uf = op_to_flat(u);
    let mut tmp = [ZERO; 36];
    for block in y.chunks_exact_mut(36) {
        for r in 0..6 {
            for c in 0..6 {
                let mut acc = ZERO;
                for k in 0..6 {
                    acc += uf[6 * r + k] * block[6 * k + c];
                }
                tmp[6 * r + c] = acc;
            }
        }
        for r in 0..6 {
            for c in 0..6 {
                let mut acc = ZERO;
                for k in 0..6 {
                    acc += tmp[6 * r + k] * uf[6 * c + k].conj();
                }
                block[6 * r + c] = acc;
            }
        }
    }
}
