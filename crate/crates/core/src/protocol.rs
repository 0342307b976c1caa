//! Pulse schedule for an N-qubit linear cluster and its simulation.
//!
//! Qubit q (1-based) owns an early bin [2(q−1)T, (2q−1)T] and a late bin
//! [(2q−1)T, 2qT]. Per qubit: extraction π-pulse, R(π), extraction π-pulse,
//! R(π/2).

use std::f64::consts::FRAC_PI_2;
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DensityMatrix, Drive, Kick, Op6, StateIndex, SystemConfig, HBAR};
use crate::propagator::{PropagationSettings, Propagator, Trajectory};
use crate::pulses::{
    embed_ground, ideal_rotation, Pulse, RotationSpec, Transition, EXTRACTION_AMPLITUDE, EXTRACTION_WIDTH,
};

/// Half-width (in pulse widths) that must stay inside a pulse's bin.
const SCHEDULE_WIDTHS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BinConfig {
    /// T in ps.
    pub bin_length: f64,
    /// Extraction center relative to the bin start (ps).
    pub extraction_offset: f64,
    /// Rotation center relative to the bin end (ps).
    pub rotation_offset: f64,
}

impl Default for BinConfig {
    fn default() -> Self {
        BinConfig { bin_length: 4000.0, extraction_offset: 50.0, rotation_offset: 160.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepKind {
    Extraction,
    RotationPi,
    RotationHalfPi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduledStep {
    /// 1-based qubit index.
    pub qubit: usize,
    pub kind: StepKind,
    /// 0-based bin index.
    pub bin: usize,
    /// Pulse center or kick time (ps).
    pub center: f64,
}

/// How the rotations and extractions are applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriveMode {
    /// Shaped sech pulses.
    Pulsed,
    /// Instantaneous ideal unitaries.
    Ideal,
}

/// Pulses used by the schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolPulses {
    pub extraction_amplitude: f64,
    pub extraction_width: f64,
    pub pi: RotationSpec,
    pub half_pi: RotationSpec,
}

impl ProtocolPulses {
    pub fn new(pi: RotationSpec, half_pi: RotationSpec) -> Self {
        ProtocolPulses { extraction_amplitude: EXTRACTION_AMPLITUDE, extraction_width: EXTRACTION_WIDTH, pi, half_pi }
    }

    /// Same pulses with every rotation phase shifted.
    pub fn with_extra_phase(self, pi_shift: f64, half_pi_shift: f64) -> Self {
        ProtocolPulses { pi: self.pi.with_extra_phase(pi_shift), half_pi: self.half_pi.with_extra_phase(half_pi_shift), ..self }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolPlan {
    pub n_qubits: usize,
    pub bins: BinConfig,
    pub pulses: ProtocolPulses,
    pub mode: DriveMode,
    pub steps: Vec<ScheduledStep>,
    pub drive: Drive,
    /// Start directly in (|G₁⟩+|G₂⟩)/√2.
    pub prepared_superposition: bool,
}

impl ProtocolPlan {
    /// 2NT.
    pub fn duration(&self) -> f64 {
        2.0 * self.n_qubits as f64 * self.bins.bin_length
    }

    pub fn initial_state(&self) -> DensityMatrix {
        if self.prepared_superposition {
            DensityMatrix::ground_superposition(0.0)
        } else {
            DensityMatrix::basis(StateIndex::G1, 0.0)
        }
    }

    pub fn bin_start(&self, bin: usize) -> f64 {
        bin as f64 * self.bins.bin_length
    }

    /// Half-width of the region a step influences (ps).
    pub fn step_half_width(&self, step: &ScheduledStep) -> f64 {
        match (self.mode, step.kind) {
            (DriveMode::Ideal, _) => 0.0,
            (DriveMode::Pulsed, StepKind::Extraction) => SCHEDULE_WIDTHS * self.pulses.extraction_width,
            (DriveMode::Pulsed, StepKind::RotationPi) => SCHEDULE_WIDTHS * self.pulses.pi.width,
            (DriveMode::Pulsed, StepKind::RotationHalfPi) => SCHEDULE_WIDTHS * self.pulses.half_pi.width,
        }
    }
}

fn schedule(n_qubits: usize, bins: &BinConfig) -> Vec<ScheduledStep> {
    let t = bins.bin_length;
    let mut steps = Vec::with_capacity(4 * n_qubits);
    for q in 0..n_qubits {
        let early = 2 * q;
        let late = early + 1;
        steps.push(ScheduledStep {
            qubit: q + 1,
            kind: StepKind::Extraction,
            bin: early,
            center: early as f64 * t + bins.extraction_offset,
        });
        steps.push(ScheduledStep {
            qubit: q + 1,
            kind: StepKind::RotationPi,
            bin: early,
            center: late as f64 * t - bins.rotation_offset,
        });
        steps.push(ScheduledStep {
            qubit: q + 1,
            kind: StepKind::Extraction,
            bin: late,
            center: late as f64 * t + bins.extraction_offset,
        });
        steps.push(ScheduledStep {
            qubit: q + 1,
            kind: StepKind::RotationHalfPi,
            bin: late,
            center: (late + 1) as f64 * t - bins.rotation_offset,
        });
    }
    steps
}

fn validate_bins(n_qubits: usize, bins: &BinConfig, config: &SystemConfig) -> Result<()> {
    config.validate()?;
    if n_qubits == 0 {
        return Err(Error::Scheduling("at least one qubit is required".into()));
    }
    if !(bins.bin_length > 0.0 && bins.bin_length.is_finite()) {
        return Err(Error::Scheduling(format!("bin length must be positive, got {}", bins.bin_length)));
    }
    let residual = (-bins.bin_length * config.gamma_cyc / HBAR).exp();
    if !(residual < 1e-3) {
        return Err(Error::Scheduling(format!(
            "bin length {} ps leaves exp(-T*gamma/hbar) = {residual:.3e} of the excitation undecayed (needs < 1e-3)",
            bins.bin_length
        )));
    }
    Ok(())
}

fn check_layout(plan: &ProtocolPlan) -> Result<()> {
    let t = plan.bins.bin_length;
    let mut spans: Vec<(f64, f64, &ScheduledStep)> = Vec::new();
    for s in &plan.steps {
        let hw = plan.step_half_width(s);
        let (lo, hi) = (s.center - hw, s.center + hw);
        let (b0, b1) = (s.bin as f64 * t, (s.bin + 1) as f64 * t);
        let inside = if hw == 0.0 { lo > b0 && hi < b1 } else { lo >= b0 - 1e-9 && hi <= b1 + 1e-9 };
        if !inside {
            return Err(Error::Scheduling(format!(
                "{:?} of qubit {} spans [{lo:.1}, {hi:.1}] ps outside its bin [{b0:.1}, {b1:.1}] ps",
                s.kind, s.qubit
            )));
        }
        spans.push((lo, hi, s));
    }
    spans.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in spans.windows(2) {
        if w[1].0 < w[0].1 - 1e-9 {
            return Err(Error::Scheduling(format!(
                "{:?} at {:.1} ps overlaps {:?} at {:.1} ps",
                w[0].2.kind, w[0].2.center, w[1].2.kind, w[1].2.center
            )));
        }
    }
    Ok(())
}

/// Schedule with shaped pulses.
pub fn build_plan(n_qubits: usize, bins: BinConfig, pulses: ProtocolPulses, config: &SystemConfig) -> Result<ProtocolPlan> {
    validate_bins(n_qubits, &bins, config)?;
    pulses.pi.validate()?;
    pulses.half_pi.validate()?;
    let steps = schedule(n_qubits, &bins);
    let mut list = Vec::with_capacity(6 * n_qubits);
    for s in &steps {
        match s.kind {
            StepKind::Extraction => list.push(Pulse::new(
                Transition::Cycling1,
                pulses.extraction_amplitude,
                pulses.extraction_width,
                s.center,
            )),
            StepKind::RotationPi => list.extend(pulses.pi.pulses(s.center)),
            StepKind::RotationHalfPi => list.extend(pulses.half_pi.pulses(s.center)),
        }
    }
    for p in &list {
        p.validate()?;
    }
    let plan = ProtocolPlan {
        n_qubits,
        bins,
        pulses,
        mode: DriveMode::Pulsed,
        steps,
        drive: Drive::from_pulses(list),
        prepared_superposition: true,
    };
    check_layout(&plan)?;
    Ok(plan)
}

/// exp(−iπ/2 (|X₁⟩⟨G₁| + h.c.)): G₁ → −i X₁.
pub fn extraction_kick() -> Op6 {
    let mut u = Op6::identity();
    let (g, x) = (StateIndex::G1.index(), StateIndex::X1.index());
    u[(g, g)] = Complex64::new(0.0, 0.0);
    u[(x, x)] = Complex64::new(0.0, 0.0);
    u[(g, x)] = Complex64::new(0.0, -1.0);
    u[(x, g)] = Complex64::new(0.0, -1.0);
    u
}

/// Schedule with instantaneous ideal extractions and rotations R_ϑ(Θ) taken
/// from the targets in `pulses`.
pub fn build_ideal_plan(n_qubits: usize, bins: BinConfig, pulses: ProtocolPulses, config: &SystemConfig) -> Result<ProtocolPlan> {
    validate_bins(n_qubits, &bins, config)?;
    let steps = schedule(n_qubits, &bins);
    let kicks = steps
        .iter()
        .map(|s| Kick {
            time: s.center,
            unitary: match s.kind {
                StepKind::Extraction => extraction_kick(),
                StepKind::RotationPi => embed_ground(&ideal_rotation(pulses.pi.theta, pulses.pi.azimuth)),
                StepKind::RotationHalfPi => {
                    embed_ground(&ideal_rotation(pulses.half_pi.theta, pulses.half_pi.azimuth))
                }
            },
        })
        .collect();
    let plan = ProtocolPlan {
        n_qubits,
        bins,
        pulses,
        mode: DriveMode::Ideal,
        steps,
        drive: Drive { pulses: Vec::new(), kicks },
        prepared_superposition: true,
    };
    check_layout(&plan)?;
    Ok(plan)
}

/// Ideal targets used by [`build_ideal_plan`] when no calibration is at hand.
pub fn ideal_targets(pi_azimuth: f64, half_pi_azimuth: f64) -> ProtocolPulses {
    ProtocolPulses::new(
        RotationSpec::new(std::f64::consts::PI, pi_azimuth, 0.0, 0.0),
        RotationSpec::new(FRAC_PI_2, half_pi_azimuth, 0.0, 0.0),
    )
}

/// A plan bound to a system and an integrator.
#[derive(Debug, Clone)]
pub struct ProtocolContext {
    pub config: SystemConfig,
    pub plan: ProtocolPlan,
    pub propagator: Propagator,
}

impl ProtocolContext {
    pub fn new(plan: ProtocolPlan, config: &SystemConfig, settings: &PropagationSettings) -> Result<Self> {
        settings.validate_for(&plan.drive.pulses)?;
        let propagator = Propagator::new(config, &plan.drive, *settings)?;
        Ok(ProtocolContext { config: config.clone(), plan, propagator })
    }

    pub fn bin_length(&self) -> f64 {
        self.plan.bins.bin_length
    }

    /// ρ(t) from the protocol start.
    pub fn state_at(&self, t: f64) -> Result<DensityMatrix> {
        self.propagator.final_state(&self.plan.initial_state(), t)
    }
}

/// Ground populations and coherence around one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSnapshot {
    pub step: ScheduledStep,
    pub t_before: f64,
    pub t_after: f64,
    pub ground_before: [f64; 2],
    pub ground_after: [f64; 2],
    pub coherence_before: f64,
    pub coherence_after: f64,
    pub x1_after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmissionRecord {
    pub trajectory: Trajectory,
    /// ∫γ_Cyc ρ_X₁X₁ dt/ħ per bin, in bin order.
    pub bin_emission: Vec<f64>,
    pub snapshots: Vec<StepSnapshot>,
    pub gamma_cyc: f64,
}

impl EmissionRecord {
    pub fn total_emission(&self) -> f64 {
        self.bin_emission.iter().sum()
    }

    /// Columnar dump: time, six populations, |ρ_G₁G₂|, emission rate.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "time_ps",
            "pop_G1",
            "pop_G2",
            "pop_X1",
            "pop_X2",
            "pop_T",
            "pop_U",
            "abs_coh_G1G2",
            "emission_rate_per_ps",
        ])?;
        for s in &self.trajectory.samples {
            let mut row = vec![format!("{}", s.time)];
            for st in StateIndex::ALL {
                row.push(format!("{:e}", s.population(st)));
            }
            row.push(format!("{:e}", s.element(StateIndex::G1, StateIndex::G2).norm()));
            row.push(format!("{:e}", self.gamma_cyc / HBAR * s.population(StateIndex::X1)));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn ground_view(rho: &DensityMatrix) -> ([f64; 2], f64) {
    (
        [rho.population(StateIndex::G1), rho.population(StateIndex::G2)],
        rho.element(StateIndex::G1, StateIndex::G2).norm(),
    )
}

/// Simulates the whole schedule, sampling every `sample_step` ps (rounded so
/// that bin edges are sample points).
pub fn run_protocol(
    plan: &ProtocolPlan,
    config: &SystemConfig,
    settings: &PropagationSettings,
    sample_step: f64,
) -> Result<EmissionRecord> {
    if !(sample_step > 0.0) {
        return Err(Error::Input(format!("sample step must be positive, got {sample_step}")));
    }
    let ctx = ProtocolContext::new(plan.clone(), config, settings)?;
    let t = plan.bins.bin_length;
    let per_bin = (t / sample_step).round().max(1.0) as usize;
    let n_bins = 2 * plan.n_qubits;
    let grid: Vec<f64> = (0..=per_bin * n_bins).map(|i| i as f64 * t / per_bin as f64).collect();

    let mut probes: Vec<(f64, usize, bool)> = Vec::new();
    for (k, s) in plan.steps.iter().enumerate() {
        let hw = plan.step_half_width(s).max(1.0);
        probes.push((s.center - hw, k, false));
        probes.push((s.center + hw, k, true));
    }
    let mut all: Vec<f64> = grid.iter().copied().chain(probes.iter().map(|p| p.0)).collect();
    all.sort_by(f64::total_cmp);
    all.dedup();

    let rho0 = plan.initial_state();
    let mut samples = Vec::with_capacity(grid.len());
    let mut probe_states: Vec<(f64, DensityMatrix)> = Vec::with_capacity(probes.len());
    let mut gi = 0;
    let mut y = rho0.to_flat().to_vec();
    let probe_times: Vec<f64> = probes.iter().map(|p| p.0).collect();
    ctx.propagator.evolve_sampled(&mut y, 0.0, plan.duration(), &all, |tt, s| {
        let rho = DensityMatrix::from_flat(s, tt);
        if gi < grid.len() && grid[gi] == tt {
            samples.push(rho.clone());
            gi += 1;
        }
        if probe_times.contains(&tt) {
            probe_states.push((tt, rho));
        }
    })?;

    let find = |tt: f64| probe_states.iter().find(|p| p.0 == tt).map(|p| p.1.clone());
    let mut snapshots = Vec::with_capacity(plan.steps.len());
    for (k, s) in plan.steps.iter().enumerate() {
        let before_t = probes.iter().find(|p| p.1 == k && !p.2).map(|p| p.0).unwrap_or(s.center);
        let after_t = probes.iter().find(|p| p.1 == k && p.2).map(|p| p.0).unwrap_or(s.center);
        let (Some(b), Some(a)) = (find(before_t), find(after_t)) else {
            continue;
        };
        let (gb, cb) = ground_view(&b);
        let (ga, ca) = ground_view(&a);
        snapshots.push(StepSnapshot {
            step: *s,
            t_before: before_t,
            t_after: after_t,
            ground_before: gb,
            ground_after: ga,
            coherence_before: cb,
            coherence_after: ca,
            x1_after: a.population(StateIndex::X1),
        });
    }

    let rate = config.gamma_cyc / HBAR;
    let dt = t / per_bin as f64;
    let bin_emission = (0..n_bins)
        .map(|b| {
            let seg = &samples[b * per_bin..=(b + 1) * per_bin];
            let inner: f64 = seg.iter().map(|s| s.population(StateIndex::X1)).sum();
            let ends = 0.5 * (seg[0].population(StateIndex::X1) + seg[per_bin].population(StateIndex::X1));
            rate * dt * (inner - ends)
        })
        .collect();
    Ok(EmissionRecord {
        trajectory: Trajectory { samples },
        bin_emission,
        snapshots,
        gamma_cyc: config.gamma_cyc,
    })
}

/// Outcome of projecting the emitter onto G₁ / G₂.
#[derive(Debug, Clone, PartialEq)]
pub struct ZProjection {
    /// Born probabilities (p_G₁, p_G₂), normalized over the ground subspace.
    pub probabilities: [f64; 2],
    /// Conditional states; `None` for a branch of vanishing probability.
    pub states: [Option<DensityMatrix>; 2],
    /// Population found outside the ground subspace.
    pub excited_weight: f64,
}

pub fn final_z_projection(rho: &DensityMatrix) -> Result<ZProjection> {
    let p = [rho.population(StateIndex::G1), rho.population(StateIndex::G2)];
    let ground = p[0] + p[1];
    if !(ground > 1e-12) {
        return Err(Error::Degenerate("no ground-state population to project".into()));
    }
    let probs = [p[0] / ground, p[1] / ground];
    let states = [StateIndex::G1, StateIndex::G2].map(|s| {
        let w = rho.population(s);
        (w / ground > 1e-12).then(|| DensityMatrix::basis(s, rho.time))
    });
    Ok(ZProjection { probabilities: probs, states, excited_weight: (rho.trace().re - ground).max(0.0) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_specs() -> ProtocolPulses {
        ProtocolPulses::new(
            RotationSpec::new(std::f64::consts::PI, 0.0, 1.0, std::f64::consts::PI),
            RotationSpec::new(FRAC_PI_2, 0.0, -36.0, 0.0),
        )
    }

    #[test]
    fn single_qubit_layout() {
        let plan = build_plan(1, BinConfig::default(), flat_specs(), &SystemConfig::default()).unwrap();
        assert_eq!(plan.steps.len(), 4);
        assert_eq!(plan.drive.pulses.len(), 6);
        assert_eq!(plan.duration(), 8000.0);
        let kinds: Vec<_> = plan.steps.iter().map(|s| s.kind).collect();
        assert_eq!(kinds, [StepKind::Extraction, StepKind::RotationPi, StepKind::Extraction, StepKind::RotationHalfPi]);
    }

    #[test]
    fn two_qubit_centers() {
        let plan = build_plan(2, BinConfig::default(), flat_specs(), &SystemConfig::default()).unwrap();
        let centers: Vec<f64> = plan.steps.iter().map(|s| s.center).collect();
        assert_eq!(centers, [50.0, 3840.0, 4050.0, 7840.0, 8050.0, 11840.0, 12050.0, 15840.0]);
    }

    #[test]
    fn short_bins_are_rejected() {
        let bins = BinConfig { bin_length: 1500.0, ..Default::default() };
        let err = build_plan(1, bins, flat_specs(), &SystemConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Scheduling(_)));
    }

    #[test]
    fn pulse_crossing_bin_edge_is_rejected() {
        let bins = BinConfig { extraction_offset: 10.0, ..Default::default() };
        let err = build_plan(1, bins, flat_specs(), &SystemConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Scheduling(_)));
    }

    #[test]
    fn projection_of_superposition_and_ground() {
        let p = final_z_projection(&DensityMatrix::ground_superposition(0.0)).unwrap();
        assert!((p.probabilities[0] - 0.5).abs() < 1e-15 && (p.probabilities[1] - 0.5).abs() < 1e-15);
        let p = final_z_projection(&DensityMatrix::basis(StateIndex::G1, 0.0)).unwrap();
        assert_eq!(p.probabilities, [1.0, 0.0]);
        assert!(p.states[1].is_none());
        assert!(final_z_projection(&DensityMatrix::basis(StateIndex::X1, 0.0)).is_err());
    }

    #[test]
    fn extraction_kick_is_unitary() {
        let u = extraction_kick();
        let d = u * u.adjoint() - Op6::identity();
        assert!(d.iter().all(|z| z.norm() < 1e-15));
    }
}
