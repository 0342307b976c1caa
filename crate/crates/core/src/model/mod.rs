//! Six-level Λ emitter: state space, interaction-frame Hamiltonian and
//! Lindblad loss channels.
//!
//! Units throughout the crate: time in ps, energies and rates in μeV. Rates
//! are turned into ps⁻¹ by dividing by [`HBAR`].

mod generator;

pub use generator::{Drive, Generator, Kick};
pub(crate) use generator::{apply_unitary, Coupling};

use nalgebra::Matrix6;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pulses::{sech_envelope, Pulse};

/// ħ in μeV·ps.
pub const HBAR: f64 = 658.2119569;

/// Dense 6×6 complex operator in the [`StateIndex`] basis.
pub type Op6 = Matrix6<Complex64>;

/// Flat row-major storage of a 6×6 matrix (`index = 6 * row + col`).
pub type Flat = [Complex64; 36];

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Basis ordering shared by every matrix in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StateIndex {
    G1 = 0,
    G2 = 1,
    X1 = 2,
    X2 = 3,
    T = 4,
    U = 5,
}

impl StateIndex {
    pub const ALL: [StateIndex; 6] = [
        StateIndex::G1,
        StateIndex::G2,
        StateIndex::X1,
        StateIndex::X2,
        StateIndex::T,
        StateIndex::U,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            StateIndex::G1 => "G1",
            StateIndex::G2 => "G2",
            StateIndex::X1 => "X1",
            StateIndex::X2 => "X2",
            StateIndex::T => "T",
            StateIndex::U => "U",
        }
    }
}

/// Level energies and loss rates of the emitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    pub e_g1: f64,
    pub e_g2: f64,
    pub e_x1: f64,
    pub e_x2: f64,
    pub e_t: f64,
    pub e_u: f64,
    /// Radiative rate of the cycling transitions X1→G1 and X2→G2.
    pub gamma_cyc: f64,
    /// Radiative rate of each T/U → ground channel at even branching; every
    /// T/U state loses population at twice this rate in total.
    pub gamma_r_tu: f64,
    /// Spin dephasing rate of the G1/G2 coherence.
    pub gamma_d_tu: f64,
    /// Pure dephasing of the transition states T and U (off by default).
    pub gamma_d_transition: f64,
    /// Fraction of the T/U radiative decay that ends in G1.
    pub tu_branching_g1: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        let base = 1.0e6;
        let splitting = 200.0;
        SystemConfig {
            e_g1: 0.0,
            e_g2: splitting,
            e_x1: base,
            e_x2: base + splitting,
            e_t: base,
            e_u: base + 500.0,
            gamma_cyc: 1.2,
            gamma_r_tu: 0.0,
            gamma_d_tu: 0.0,
            gamma_d_transition: 0.0,
            tu_branching_g1: 0.5,
        }
    }
}

impl SystemConfig {
    /// Ground-state splitting Δ_GS.
    pub fn ground_splitting(&self) -> f64 {
        self.e_g2 - self.e_g1
    }

    /// Target–unwanted splitting ε.
    pub fn tu_splitting(&self) -> f64 {
        self.e_u - self.e_t
    }

    pub fn energy(&self, state: StateIndex) -> f64 {
        match state {
            StateIndex::G1 => self.e_g1,
            StateIndex::G2 => self.e_g2,
            StateIndex::X1 => self.e_x1,
            StateIndex::X2 => self.e_x2,
            StateIndex::T => self.e_t,
            StateIndex::U => self.e_u,
        }
    }

    /// A degenerate Λ system has no ground or transition splitting.
    pub fn is_degenerate_lambda(&self) -> bool {
        self.ground_splitting().abs() < 1e-12 && self.tu_splitting().abs() < 1e-12
    }

    pub fn validate(&self) -> Result<()> {
        for s in StateIndex::ALL {
            if !self.energy(s).is_finite() {
                return Err(Error::Config(format!("energy of {} is not finite", s.label())));
            }
        }
        let rates = [
            ("gamma_cyc", self.gamma_cyc),
            ("gamma_r_tu", self.gamma_r_tu),
            ("gamma_d_tu", self.gamma_d_tu),
            ("gamma_d_transition", self.gamma_d_transition),
        ];
        for (name, r) in rates {
            if !r.is_finite() || r < 0.0 {
                return Err(Error::Config(format!("{name} must be a finite non-negative rate, got {r}")));
            }
        }
        if !(0.0..=1.0).contains(&self.tu_branching_g1) {
            return Err(Error::Config(format!(
                "tu_branching_g1 must lie in [0, 1], got {}",
                self.tu_branching_g1
            )));
        }
        let pairs = [
            (StateIndex::G1, StateIndex::X1),
            (StateIndex::G2, StateIndex::X2),
            (StateIndex::G1, StateIndex::T),
            (StateIndex::G2, StateIndex::T),
            (StateIndex::G1, StateIndex::U),
            (StateIndex::G2, StateIndex::U),
        ];
        for (lo, hi) in pairs {
            if self.energy(lo) >= self.energy(hi) {
                return Err(Error::Config(format!(
                    "{} must lie below {}",
                    lo.label(),
                    hi.label()
                )));
            }
        }
        Ok(())
    }
}

/// Emitter state at a given time.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub matrix: Op6,
    /// Simulation time in ps.
    pub time: f64,
}

impl DensityMatrix {
    pub fn new(matrix: Op6, time: f64) -> Self {
        DensityMatrix { matrix, time }
    }

    /// Projector onto a single basis state.
    pub fn basis(state: StateIndex, time: f64) -> Self {
        let mut m = Op6::zeros();
        m[(state.index(), state.index())] = ONE;
        DensityMatrix { matrix: m, time }
    }

    /// Pure state |ψ⟩⟨ψ|; the vector is normalized first.
    pub fn pure(amplitudes: [Complex64; 6], time: f64) -> Self {
        let v = nalgebra::Vector6::from(amplitudes);
        let v = v / Complex64::new(v.norm(), 0.0);
        DensityMatrix { matrix: v * v.adjoint(), time }
    }

    /// (|G1⟩ + |G2⟩)/√2.
    pub fn ground_superposition(time: f64) -> Self {
        let mut a = [ZERO; 6];
        a[0] = ONE;
        a[1] = ONE;
        DensityMatrix::pure(a, time)
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    pub fn population(&self, state: StateIndex) -> f64 {
        self.matrix[(state.index(), state.index())].re
    }

    pub fn element(&self, row: StateIndex, col: StateIndex) -> Complex64 {
        self.matrix[(row.index(), col.index())]
    }

    pub fn purity(&self) -> f64 {
        (self.matrix * self.matrix).trace().re
    }

    /// max |ρ − ρ†|.
    pub fn hermiticity_residual(&self) -> f64 {
        (self.matrix - self.matrix.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let h = (self.matrix + self.matrix.adjoint()) * Complex64::new(0.5, 0.0);
        h.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn to_flat(&self) -> Flat {
        op_to_flat(&self.matrix)
    }

    pub fn from_flat(flat: &[Complex64], time: f64) -> Self {
        DensityMatrix { matrix: flat_to_op(flat), time }
    }
}

pub fn op_to_flat(m: &Op6) -> Flat {
    let mut f = [ZERO; 36];
    for r in 0..6 {
        for c in 0..6 {
            f[6 * r + c] = m[(r, c)];
        }
    }
    f
}

pub fn flat_to_op(f: &[Complex64]) -> Op6 {
    Op6::from_fn(|r, c| f[6 * r + c])
}

/// |row⟩⟨col|.
pub fn ket_bra(row: StateIndex, col: StateIndex) -> Op6 {
    let mut m = Op6::zeros();
    m[(row.index(), col.index())] = ONE;
    m
}

/// Photon annihilation operator of the cycling transition, |G1⟩⟨X1|.
pub fn cycling_lowering() -> Op6 {
    ket_bra(StateIndex::G1, StateIndex::X1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Radiative,
    Dephasing,
}

/// One Lindblad jump operator, rate folded in as √γ (γ in μeV).
#[derive(Debug, Clone, PartialEq)]
pub struct LindbladChannel {
    pub kind: ChannelKind,
    pub operator: Op6,
    /// Rate in μeV.
    pub rate: f64,
    pub label: String,
}

impl LindbladChannel {
    /// √γ |lower⟩⟨upper|.
    pub fn radiative(lower: StateIndex, upper: StateIndex, rate: f64) -> Self {
        LindbladChannel {
            kind: ChannelKind::Radiative,
            operator: ket_bra(lower, upper) * Complex64::new(rate.sqrt(), 0.0),
            rate,
            label: format!("{}->{}", upper.label(), lower.label()),
        }
    }

    /// √γ (|upper⟩⟨upper| − |lower⟩⟨lower|).
    pub fn dephasing(lower: StateIndex, upper: StateIndex, rate: f64) -> Self {
        let op = (ket_bra(upper, upper) - ket_bra(lower, lower)) * Complex64::new(rate.sqrt(), 0.0);
        LindbladChannel {
            kind: ChannelKind::Dephasing,
            operator: op,
            rate,
            label: format!("dephasing {}/{}", lower.label(), upper.label()),
        }
    }

    /// √γ |s⟩⟨s|: pure dephasing of every coherence involving `s`.
    pub fn projector_dephasing(state: StateIndex, rate: f64) -> Self {
        LindbladChannel {
            kind: ChannelKind::Dephasing,
            operator: ket_bra(state, state) * Complex64::new(rate.sqrt(), 0.0),
            rate,
            label: format!("dephasing {}", state.label()),
        }
    }
}

/// All loss channels implied by `config`; zero-rate channels are omitted.
pub fn build_lindblad_channels(config: &SystemConfig) -> Result<Vec<LindbladChannel>> {
    config.validate()?;
    use StateIndex::*;
    let mut out = Vec::new();
    if config.gamma_cyc > 0.0 {
        out.push(LindbladChannel::radiative(G1, X1, config.gamma_cyc));
        out.push(LindbladChannel::radiative(G2, X2, config.gamma_cyc));
    }
    if config.gamma_r_tu > 0.0 {
        let to_g1 = 2.0 * config.gamma_r_tu * config.tu_branching_g1;
        let to_g2 = 2.0 * config.gamma_r_tu - to_g1;
        for upper in [T, U] {
            if to_g1 > 0.0 {
                out.push(LindbladChannel::radiative(G1, upper, to_g1));
            }
            if to_g2 > 0.0 {
                out.push(LindbladChannel::radiative(G2, upper, to_g2));
            }
        }
    }
    if config.gamma_d_tu > 0.0 {
        out.push(LindbladChannel::dephasing(G1, G2, config.gamma_d_tu));
    }
    if config.gamma_d_transition > 0.0 {
        out.push(LindbladChannel::projector_dephasing(T, config.gamma_d_transition));
        out.push(LindbladChannel::projector_dephasing(U, config.gamma_d_transition));
    }
    Ok(out)
}

/// Interaction-frame Hamiltonian (μeV) at time `t`.
///
/// Each pulse couples its lower state to every upper state of its transition
/// with element ħΩ(t); couplings to a non-addressed upper state carry the
/// extra detuning of that state relative to the addressed one.
pub fn build_hamiltonian(t: f64, config: &SystemConfig, pulses: &[Pulse]) -> Result<Op6> {
    let mut h = Op6::zeros();
    for pulse in pulses {
        let omega = sech_envelope(t, pulse);
        if omega == ZERO {
            continue;
        }
        let lower = pulse.transition.lower();
        let addressed = pulse.transition.addressed();
        for (upper, weight) in pulse.couplings() {
            let shift = (config.energy(upper) - config.energy(addressed)) / HBAR;
            let phase = Complex64::from_polar(1.0, shift * (t - pulse.center));
            let v = omega * phase * (weight * HBAR);
            h[(upper.index(), lower.index())] += v;
            h[(lower.index(), upper.index())] += v.conj();
        }
    }
    Ok(h)
}

/// dρ/dt in ps⁻¹ from the dense Hamiltonian and jump operators.
pub fn lindblad_rhs(rho: &DensityMatrix, t: f64, config: &SystemConfig, pulses: &[Pulse]) -> Result<Op6> {
    let h = build_hamiltonian(t, config, pulses)?;
    let channels = build_lindblad_channels(config)?;
    let m = &rho.matrix;
    let minus_i = Complex64::new(0.0, -1.0 / HBAR);
    let mut d = (h * m - m * h) * minus_i;
    for ch in &channels {
        let o = ch.operator / Complex64::new(HBAR.sqrt(), 0.0);
        let od = o.adjoint();
        let odo = od * o;
        d += o * m * od - (odo * m + m * odo) * Complex64::new(0.5, 0.0);
    }
    Ok(d)
}
