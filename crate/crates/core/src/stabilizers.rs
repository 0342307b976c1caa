//! Stabilizer generator expectation values of the emitted linear cluster,
//! sweeps over pulse phase and loss, the entanglement witness and the
//! cluster-length bound, plus an exact state-vector oracle.
//!
//! Stabilizer values are complex: ⟨ΦZ⟩ = ⟨XZ⟩ + i⟨YZ⟩. Projections onto a
//! particular Φ are post-processing of the same number.

use nalgebra::{DVector, Matrix2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::correlations::{integrate_on, stabilizer_patterns, BinnedCorrelations, SuperGrid};
use crate::error::{Error, Result};
use crate::model::{SystemConfig, ONE, ZERO};
use crate::propagator::PropagationSettings;
use crate::protocol::{build_ideal_plan, build_plan, BinConfig, DriveMode, ProtocolContext, ProtocolPulses};
use crate::pulses::ideal_rotation;

/// Smallest normalization accepted before a value is considered undefined.
pub const MIN_NORMALIZATION: f64 = 1e-9;

fn checked_total(total: Option<f64>, order: usize) -> Result<f64> {
    let total = total.ok_or_else(|| Error::Input(format!("order-{order} population patterns are missing")))?;
    if !(total > MIN_NORMALIZATION) {
        return Err(Error::Degenerate(format!("order-{order} photon normalization vanishes ({total:.3e})")));
    }
    Ok(total)
}

/// ⟨Φ⁽¹⁾Z⁽²⁾⟩ = 2(Ḡ_EEEL − Ḡ_ELLL)/Ḡ²_tot.
pub fn stabilizer_phi_z(binned: &BinnedCorrelations) -> Result<Complex64> {
    let total = checked_total(binned.g2_total, 2)?;
    Ok(2.0 * (binned.get("EEEL")? - binned.get("ELLL")?) / total)
}

/// ⟨Z⁽¹⁾Φ⁽²⁾Z⁽³⁾⟩ = 2(Ḡ_EEEELE + Ḡ_LELLLL − Ḡ_EELLLE − Ḡ_LEEELL)/Ḡ³_tot.
pub fn stabilizer_z_phi_z(binned: &BinnedCorrelations) -> Result<Complex64> {
    let total = checked_total(binned.g3_total, 3)?;
    let num = binned.get("EEEELE")? + binned.get("LELLLL")? - binned.get("EELLLE")? - binned.get("LEEELL")?;
    Ok(2.0 * num / total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilizerValue {
    /// Stabilizer index k; anchors are shifted by t₀ = 2(k−1)T.
    pub index: usize,
    pub t0: f64,
    pub value: Complex64,
}

impl StabilizerValue {
    pub fn magnitude(&self) -> f64 {
        self.value.norm()
    }

    pub fn phase(&self) -> f64 {
        self.value.arg()
    }

    /// Expectation of cos(φ)X + sin(φ)Y on the middle qubit.
    pub fn along(&self, phi: f64) -> f64 {
        (self.value * Complex64::from_polar(1.0, -phi)).re
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilizerReport {
    pub phi_z: StabilizerValue,
    /// ⟨ZΦZ⟩⁽ᵏ⁾ for k = 1..k_max.
    pub z_phi_z: Vec<StabilizerValue>,
    pub resolution: usize,
    pub bin_length: f64,
    pub quadrature: String,
    pub correlations: Vec<BinnedCorrelations>,
}

impl StabilizerReport {
    pub fn z_phi_z_magnitudes(&self) -> Vec<f64> {
        self.z_phi_z.iter().map(StabilizerValue::magnitude).collect()
    }

    /// Sample standard deviation of |⟨ZΦZ⟩⁽ᵏ⁾| (0 for a single value).
    pub fn z_phi_z_spread(&self) -> f64 {
        sample_std(&self.z_phi_z_magnitudes())
    }

    /// Witness from the magnitudes, for a cluster of `n` qubits.
    pub fn witness(&self, n: usize) -> WitnessReport {
        witness(self.phi_z.magnitude(), &self.z_phi_z_magnitudes(), n)
    }
}

pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// ⟨ΦZ⟩ and ⟨ZΦZ⟩⁽ᵏ⁾ for k = 1..k_max from one protocol.
pub fn higher_order_stabilizers(ctx: &ProtocolContext, k_max: usize, resolution: usize) -> Result<StabilizerReport> {
    if k_max == 0 {
        return Err(Error::Input("k_max must be at least 1".into()));
    }
    let n = ctx.plan.n_qubits;
    if n < k_max + 2 {
        return Err(Error::Input(format!(
            "stabilizer {k_max} needs at least {} qubits, the protocol has {n}",
            k_max + 2
        )));
    }
    let t = ctx.bin_length();
    let mut patterns = stabilizer_patterns(3);
    let mut correlations = Vec::with_capacity(k_max);
    let mut z_phi_z = Vec::with_capacity(k_max);
    let mut phi_z = None;
    for k in 1..=k_max {
        let t0 = 2.0 * (k - 1) as f64 * t;
        let grid = SuperGrid::build(ctx, t0, 6, resolution)?;
        if k == 1 {
            patterns.extend(stabilizer_patterns(2));
        }
        let binned = integrate_on(&grid, &patterns)?;
        if k == 1 {
            phi_z = Some(StabilizerValue { index: 1, t0, value: stabilizer_phi_z(&binned)? });
            patterns = stabilizer_patterns(3);
        }
        z_phi_z.push(StabilizerValue { index: k, t0, value: stabilizer_z_phi_z(&binned)? });
        correlations.push(binned);
    }
    Ok(StabilizerReport {
        phi_z: phi_z.expect("k = 1 is always evaluated"),
        z_phi_z,
        resolution,
        bin_length: t,
        quadrature: "trapezoid".into(),
        correlations,
    })
}

/// Everything needed to rebuild the protocol at a sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSetup {
    pub config: SystemConfig,
    pub bins: BinConfig,
    pub pulses: ProtocolPulses,
    pub settings: PropagationSettings,
    pub mode: DriveMode,
    pub resolution: usize,
}

impl PipelineSetup {
    pub fn context(&self, n_qubits: usize) -> Result<ProtocolContext> {
        let plan = match self.mode {
            DriveMode::Pulsed => build_plan(n_qubits, self.bins, self.pulses, &self.config)?,
            DriveMode::Ideal => build_ideal_plan(n_qubits, self.bins, self.pulses, &self.config)?,
        };
        ProtocolContext::new(plan, &self.config, &self.settings)
    }

    /// ⟨ΦZ⟩ and ⟨ZΦZ⟩ of a three-qubit run.
    pub fn stabilizers(&self) -> Result<StabilizerReport> {
        higher_order_stabilizers(&self.context(3)?, 1, self.resolution)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseTarget {
    /// Shift every rotation.
    Both,
    Pi,
    HalfPi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub phase: f64,
    pub phi_z: Complex64,
    pub z_phi_z: Complex64,
}

/// Stabilizers while the rotation pulse phase is shifted by each ϑ.
pub fn sweep_phase(phases: &[f64], target: PhaseTarget, setup: &PipelineSetup) -> Result<Vec<PhasePoint>> {
    if phases.is_empty() {
        return Err(Error::Input("phase grid is empty".into()));
    }
    phases
        .iter()
        .map(|&ph| {
            let (a, b) = match target {
                PhaseTarget::Both => (ph, ph),
                PhaseTarget::Pi => (ph, 0.0),
                PhaseTarget::HalfPi => (0.0, ph),
            };
            let point = PipelineSetup { pulses: setup.pulses.with_extra_phase(a, b), ..setup.clone() };
            let r = point.stabilizers()?;
            Ok(PhasePoint { phase: ph, phi_z: r.phi_z.value, z_phi_z: r.z_phi_z[0].value })
        })
        .collect()
}

/// Loss channel of the transition states swept by [`sweep_loss`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossChannel {
    Radiative,
    Dephasing,
}

impl LossChannel {
    pub fn apply(self, config: &SystemConfig, rate: f64) -> SystemConfig {
        let mut c = config.clone();
        match self {
            LossChannel::Radiative => c.gamma_r_tu = rate,
            LossChannel::Dephasing => c.gamma_d_tu = rate,
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub channel: LossChannel,
    /// μeV.
    pub rate: f64,
    pub phi_z: Complex64,
    pub z_phi_z: Complex64,
}

/// Stabilizers versus a transition-state loss rate; the pulses stay as given.
pub fn sweep_loss(rates: &[f64], channel: LossChannel, setup: &PipelineSetup) -> Result<Vec<LossPoint>> {
    if rates.is_empty() {
        return Err(Error::Input("loss grid is empty".into()));
    }
    rates
        .iter()
        .map(|&rate| {
            if !(rate >= 0.0 && rate.is_finite()) {
                return Err(Error::Input(format!("loss rate must be non-negative, got {rate}")));
            }
            let point = PipelineSetup { config: channel.apply(&setup.config, rate), ..setup.clone() };
            let r = point.stabilizers()?;
            Ok(LossPoint { channel, rate, phi_z: r.phi_z.value, z_phi_z: r.z_phi_z[0].value })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "value")]
pub enum LengthBound {
    Finite(u64),
    /// ⟨ZXZ⟩ ≥ 1: no finite bound.
    Unbounded,
}

/// floor(⟨XZ⟩/(1 − ⟨ZXZ⟩) + 1).
pub fn length_bound(xz: f64, zxz: f64) -> LengthBound {
    if zxz >= 1.0 {
        return LengthBound::Unbounded;
    }
    let b = xz / (1.0 - zxz) + 1.0;
    if !b.is_finite() || b >= u64::MAX as f64 {
        return LengthBound::Unbounded;
    }
    LengthBound::Finite(b.floor().max(0.0) as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessReport {
    pub value: f64,
    pub n: usize,
    /// ⟨XZ⟩ followed by the N − 1 ⟨ZXZ⟩ terms actually used.
    pub terms: Vec<f64>,
    pub entangled: bool,
    /// Bound from ⟨XZ⟩ and the smallest ⟨ZXZ⟩.
    pub length_bound: LengthBound,
}

/// ⟨W⟩ = (N − 1) − ⟨XZ⟩ − Σ_{i=2..N} ⟨ZXZ⟩⁽ⁱ⁾.
///
/// Missing ⟨ZXZ⟩ terms are filled with the smallest supplied value (0 when
/// none is supplied); extra ones are ignored.
pub fn witness(xz: f64, zxz: &[f64], n: usize) -> WitnessReport {
    let floor = zxz.iter().copied().fold(f64::INFINITY, f64::min);
    let pad = if floor.is_finite() { floor } else { 0.0 };
    let count = n.saturating_sub(1);
    let mut terms = Vec::with_capacity(count + 1);
    terms.push(xz);
    terms.extend((0..count).map(|i| zxz.get(i).copied().unwrap_or(pad)));
    let value = count as f64 - terms.iter().sum::<f64>();
    WitnessReport { value, n, terms, entangled: value < 0.0, length_bound: length_bound(xz, pad) }
}

/// Exact stabilizers of the ideal emission sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    /// Photons 1..N (first most significant) followed by the spin.
    pub state: DVector<Complex64>,
    pub phi_z: Complex64,
    /// ⟨Z⁽ⁱ⁻¹⁾Φ⁽ⁱ⁾Z⁽ⁱ⁺¹⁾⟩ for i = 2..N−1.
    pub z_phi_z: Vec<Complex64>,
}

/// Largest register accepted by the oracle.
pub const ORACLE_MAX_QUBITS: usize = 14;

/// Builds the ideal photon register qubit by qubit: copy the spin's Z value
/// onto a fresh photon (G₁ → E, G₂ → L), then apply R(Θ₁, ϑ₁) and R(Θ₂, ϑ₂) to
/// the spin. The spin starts in (|G₁⟩ + |G₂⟩)/√2.
pub fn ideal_state_oracle(n_qubits: usize, rotations: [(f64, f64); 2]) -> Result<OracleReport> {
    if n_qubits < 2 || n_qubits > ORACLE_MAX_QUBITS {
        return Err(Error::Input(format!("oracle supports 2..={ORACLE_MAX_QUBITS} qubits, got {n_qubits}")));
    }
    let r1 = ideal_rotation(rotations[0].0, rotations[0].1);
    let r2 = ideal_rotation(rotations[1].0, rotations[1].1);
    let spin_gate = r2 * r1;
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut psi = vec![Complex64::new(h, 0.0), Complex64::new(h, 0.0)];
    for _ in 0..n_qubits {
        let rest = psi.len() / 2;
        let mut grown = vec![ZERO; 4 * rest];
        for p in 0..rest {
            // (photons, new photon, spin)
            grown[4 * p] = psi[2 * p];
            grown[4 * p + 3] = psi[2 * p + 1];
        }
        for pair in grown.chunks_exact_mut(2) {
            let (a, b) = (pair[0], pair[1]);
            pair[0] = spin_gate[(0, 0)] * a + spin_gate[(0, 1)] * b;
            pair[1] = spin_gate[(1, 0)] * a + spin_gate[(1, 1)] * b;
        }
        psi = grown;
    }
    let state = DVector::from_vec(psi);
    let s = Matrix2::new(ZERO, Complex64::new(2.0, 0.0), ZERO, ZERO);
    let z = Matrix2::new(ONE, ZERO, ZERO, -ONE);
    let sites = n_qubits + 1;
    // ⟨ψ|O₁ ⊗ … ⊗ O_sites|ψ⟩ with each factor applied on its own qubit, so the
    // full operator never has to be stored.
    let expect = |ops: Vec<(usize, Matrix2<Complex64>)>| {
        let mut phi = state.clone();
        for (site, op) in ops {
            let stride = 1usize << (sites - 1 - site);
            for base in 0..phi.len() {
                if base & stride == 0 {
                    let (a, b) = (phi[base], phi[base | stride]);
                    phi[base] = op[(0, 0)] * a + op[(0, 1)] * b;
                    phi[base | stride] = op[(1, 0)] * a + op[(1, 1)] * b;
                }
            }
        }
        state.dotc(&phi)
    };
    let string = |centre: usize, with_left: bool| {
        let mut ops = vec![(centre, s), (centre + 1, z)];
        if with_left {
            ops.push((centre - 1, z));
        }
        ops
    };
    let phi_z = expect(string(0, false));
    let z_phi_z = (1..n_qubits - 1).map(|c| expect(string(c, true))).collect();
    Ok(OracleReport { state, phi_z, z_phi_z })
}
