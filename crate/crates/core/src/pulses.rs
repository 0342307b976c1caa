//! Sech pulses, the analytical rotation detuning and numerical calibration of
//! ground-state rotations.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use nalgebra::Matrix2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Drive, Op6, StateIndex, SystemConfig, HBAR, ONE, ZERO};
use crate::propagator::{PropagationSettings, Propagator};

/// Half-width of a pulse window in units of 1/σ. The envelope is exactly
/// zero outside it.
pub const SUPPORT_WIDTHS: f64 = 20.0;

/// 1/σ of the rotation pulses (ps).
pub const ROTATION_WIDTH: f64 = 16.0;
/// 1/σ of the extraction pulses (ps).
pub const EXTRACTION_WIDTH: f64 = 5.0;
/// Amplitude of a resonant π-pulse on a cycling transition.
pub const EXTRACTION_AMPLITUDE: f64 = 0.5;
/// Per-ground-state amplitude of a rotation pulse pair.
pub const ROTATION_AMPLITUDE: f64 = FRAC_1_SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Transition {
    #[serde(rename = "cycling-1")]
    Cycling1,
    #[serde(rename = "cycling-2")]
    Cycling2,
    #[serde(rename = "rotation-g1")]
    RotationG1,
    #[serde(rename = "rotation-g2")]
    RotationG2,
}

impl Transition {
    pub fn label(self) -> &'static str {
        match self {
            Transition::Cycling1 => "cycling-1",
            Transition::Cycling2 => "cycling-2",
            Transition::RotationG1 => "rotation-g1",
            Transition::RotationG2 => "rotation-g2",
        }
    }

    pub fn lower(self) -> StateIndex {
        match self {
            Transition::Cycling1 | Transition::RotationG1 => StateIndex::G1,
            Transition::Cycling2 | Transition::RotationG2 => StateIndex::G2,
        }
    }

    /// Upper state the detuning is measured from.
    pub fn addressed(self) -> StateIndex {
        match self {
            Transition::Cycling1 => StateIndex::X1,
            Transition::Cycling2 => StateIndex::X2,
            Transition::RotationG1 | Transition::RotationG2 => StateIndex::T,
        }
    }
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Transition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cycling-1" => Ok(Transition::Cycling1),
            "cycling-2" => Ok(Transition::Cycling2),
            "rotation-g1" => Ok(Transition::RotationG1),
            "rotation-g2" => Ok(Transition::RotationG2),
            _ => Err(Error::UnknownTransition(s.to_string())),
        }
    }
}

/// One sech pulse Ω(t) = ασ sech(σ(t−t₀)) exp(i(δ(t−t₀)/ħ − ϑ)).
///
/// A positive detuning puts the carrier below the addressed transition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pulse {
    pub transition: Transition,
    /// α; the Rabi angle on a resonant two-level transition is 2απ.
    pub amplitude: f64,
    /// 1/σ in ps.
    pub width: f64,
    /// t₀ in ps.
    pub center: f64,
    /// δ in μeV.
    #[serde(default)]
    pub detuning: f64,
    /// ϑ in rad.
    #[serde(default)]
    pub phase: f64,
    /// Relative coupling of the unwanted state U (rotation pulses only).
    #[serde(default = "one")]
    pub u_coupling: f64,
}

fn one() -> f64 {
    1.0
}

impl Pulse {
    pub fn new(transition: Transition, amplitude: f64, width: f64, center: f64) -> Self {
        Pulse { transition, amplitude, width, center, detuning: 0.0, phase: 0.0, u_coupling: 1.0 }
    }

    /// Resonant π-pulse on the first cycling transition.
    pub fn extraction(center: f64) -> Self {
        Pulse::new(Transition::Cycling1, EXTRACTION_AMPLITUDE, EXTRACTION_WIDTH, center)
    }

    pub fn with_detuning(mut self, detuning: f64) -> Self {
        self.detuning = detuning;
        self
    }

    pub fn with_phase(mut self, phase: f64) -> Self {
        self.phase = phase;
        self
    }

    pub fn with_u_coupling(mut self, u: f64) -> Self {
        self.u_coupling = u;
        self
    }

    /// σ in ps⁻¹.
    pub fn sigma(&self) -> f64 {
        1.0 / self.width
    }

    /// ħσ in μeV.
    pub fn bandwidth(&self) -> f64 {
        HBAR / self.width
    }

    /// ∫|Ω| dt = απ.
    pub fn area(&self) -> f64 {
        self.amplitude * PI
    }

    /// Interval outside which the envelope is zero.
    pub fn support(&self) -> (f64, f64) {
        let half = SUPPORT_WIDTHS * self.width;
        (self.center - half, self.center + half)
    }

    /// Upper states driven by this pulse with their relative couplings.
    pub fn couplings(&self) -> Vec<(StateIndex, f64)> {
        match self.transition {
            Transition::Cycling1 => vec![(StateIndex::X1, 1.0)],
            Transition::Cycling2 => vec![(StateIndex::X2, 1.0)],
            Transition::RotationG1 | Transition::RotationG2 => {
                vec![(StateIndex::T, 1.0), (StateIndex::U, self.u_coupling)]
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("amplitude", self.amplitude),
            ("width", self.width),
            ("center", self.center),
            ("detuning", self.detuning),
            ("phase", self.phase),
            ("u_coupling", self.u_coupling),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::Config(format!("pulse {name} is not finite")));
            }
        }
        if self.width <= 0.0 {
            return Err(Error::Config(format!("pulse width must be positive, got {}", self.width)));
        }
        Ok(())
    }
}

/// Complex drive Ω(t) in ps⁻¹, relative to the addressed transition.
pub fn sech_envelope(t: f64, pulse: &Pulse) -> Complex64 {
    let s = t - pulse.center;
    if s.abs() > SUPPORT_WIDTHS * pulse.width {
        return ZERO;
    }
    let sigma = pulse.sigma();
    let env = pulse.amplitude * sigma / (sigma * s).cosh();
    Complex64::from_polar(env, pulse.detuning * s / HBAR - pulse.phase)
}

/// Both branches δ = ½(ε ∓ √(ε² + 4εσ cot(Θ/2) − 4σ²)), minus branch first.
///
/// `epsilon` and `sigma` are energies in μeV (σ meaning ħσ).
pub fn analytical_detuning(theta: f64, epsilon: f64, sigma: f64) -> Result<(f64, f64)> {
    if !(theta > 0.0 && theta < 2.0 * PI) {
        return Err(Error::NoDetuningSolution { theta, admissible: "(0, 2π)".into() });
    }
    let cot = (theta / 2.0).cos() / (theta / 2.0).sin();
    let disc = epsilon * epsilon + 4.0 * epsilon * sigma * cot - 4.0 * sigma * sigma;
    if disc < 0.0 || !disc.is_finite() {
        let admissible = if epsilon > 0.0 && sigma > 0.0 {
            let c = (4.0 * sigma * sigma - epsilon * epsilon) / (4.0 * epsilon * sigma);
            format!("0 < theta <= {:.6} rad", 2.0 * (1.0f64).atan2(c))
        } else {
            "empty".to_string()
        };
        return Err(Error::NoDetuningSolution { theta, admissible });
    }
    let root = disc.sqrt();
    Ok((0.5 * (epsilon - root), 0.5 * (epsilon + root)))
}

/// R_ϑ(Θ) = cos(Θ/2)·1 − i sin(Θ/2)(cos ϑ X + sin ϑ Y) on (G₁, G₂).
pub fn ideal_rotation(theta: f64, azimuth: f64) -> Matrix2<Complex64> {
    let c = Complex64::new((theta / 2.0).cos(), 0.0);
    let s = (theta / 2.0).sin();
    let off01 = Complex64::new(0.0, -s) * Complex64::from_polar(1.0, -azimuth);
    let off10 = Complex64::new(0.0, -s) * Complex64::from_polar(1.0, azimuth);
    Matrix2::new(c, off01, off10, c)
}

/// Embeds a ground-subspace operator into the six-level space (identity on
/// the other levels).
pub fn embed_ground(u: &Matrix2<Complex64>) -> Op6 {
    let mut m = Op6::identity();
    for r in 0..2 {
        for c in 0..2 {
            m[(r, c)] = u[(r, c)];
        }
    }
    m
}

/// A pair of simultaneous rotation pulses from G₁ and G₂ into T/U.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RotationSpec {
    /// Target polar angle Θ.
    pub theta: f64,
    /// Target azimuth ϑ.
    pub azimuth: f64,
    /// Common detuning δ (μeV).
    pub detuning: f64,
    pub phase_g1: f64,
    pub phase_g2: f64,
    pub alpha_g1: f64,
    pub alpha_g2: f64,
    /// 1/σ in ps.
    pub width: f64,
}

impl RotationSpec {
    /// Equal-amplitude pair whose G₂ pulse phase is `azimuth + offset`.
    pub fn new(theta: f64, azimuth: f64, detuning: f64, offset: f64) -> Self {
        RotationSpec {
            theta,
            azimuth,
            detuning,
            phase_g1: 0.0,
            phase_g2: azimuth + offset,
            alpha_g1: ROTATION_AMPLITUDE,
            alpha_g2: ROTATION_AMPLITUDE,
            width: ROTATION_WIDTH,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let norm = self.alpha_g1 * self.alpha_g1 + self.alpha_g2 * self.alpha_g2;
        if (norm - 1.0).abs() > 1e-9 && norm != 0.0 {
            return Err(Error::Config(format!(
                "rotation amplitudes must satisfy a1^2 + a2^2 = 1 (or both vanish), got {norm}"
            )));
        }
        if !(self.width > 0.0) {
            return Err(Error::Config("rotation width must be positive".into()));
        }
        Ok(())
    }

    /// Rotates the axis: the G₂ pulse phase and the target azimuth move by `dphi`.
    pub fn with_extra_phase(mut self, dphi: f64) -> Self {
        self.phase_g2 += dphi;
        self.azimuth += dphi;
        self
    }

    pub fn pulses(&self, center: f64) -> [Pulse; 2] {
        [
            Pulse::new(Transition::RotationG1, self.alpha_g1, self.width, center)
                .with_detuning(self.detuning)
                .with_phase(self.phase_g1),
            Pulse::new(Transition::RotationG2, self.alpha_g2, self.width, center)
                .with_detuning(self.detuning)
                .with_phase(self.phase_g2),
        ]
    }

    /// Target gate on the ground subspace.
    pub fn ideal(&self) -> Matrix2<Complex64> {
        ideal_rotation(self.theta, self.azimuth)
    }

    /// Propagation window around a pulse centered at `center`.
    pub fn window(&self, center: f64) -> (f64, f64) {
        let half = SUPPORT_WIDTHS * self.width;
        (center - half, center + half)
    }
}

/// Image of the four ground-subspace matrix units |Gi⟩⟨Gj| under a rotation
/// pulse pair, ordered (00, 01, 10, 11).
#[derive(Debug, Clone, PartialEq)]
pub struct GroundMap {
    pub images: [Op6; 4],
}

impl GroundMap {
    /// Output for the ground-subspace input state `psi`.
    pub fn apply(&self, psi: [Complex64; 2]) -> Op6 {
        let mut out = Op6::zeros();
        for i in 0..2 {
            for j in 0..2 {
                out += self.images[2 * i + j] * (psi[i] * psi[j].conj());
            }
        }
        out
    }

    /// Average fidelity over the six axial Bloch states against `ideal`.
    /// Population leaving the ground subspace counts as error.
    pub fn average_fidelity(&self, ideal: &Matrix2<Complex64>) -> f64 {
        let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
        let ih = Complex64::new(0.0, FRAC_1_SQRT_2);
        let inputs = [[ONE, ZERO], [ZERO, ONE], [h, h], [h, -h], [h, ih], [h, -ih]];
        let mut total = 0.0;
        for psi in inputs {
            let out = self.apply(psi);
            let target = [
                ideal[(0, 0)] * psi[0] + ideal[(0, 1)] * psi[1],
                ideal[(1, 0)] * psi[0] + ideal[(1, 1)] * psi[1],
            ];
            let mut f = ZERO;
            for r in 0..2 {
                for c in 0..2 {
                    f += target[r].conj() * out[(r, c)] * target[c];
                }
            }
            total += f.re;
        }
        total / inputs.len() as f64
    }
}

/// Propagates the ground matrix units through one rotation pulse pair.
pub fn ground_map(spec: &RotationSpec, config: &SystemConfig, settings: &PropagationSettings) -> Result<GroundMap> {
    spec.validate()?;
    let prop = Propagator::new(config, &Drive::from_pulses(spec.pulses(0.0).to_vec()), *settings)?;
    let mut y = vec![ZERO; 4 * 36];
    for (k, (i, j)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
        y[36 * k + 6 * i + j] = ONE;
    }
    let (a, b) = spec.window(0.0);
    prop.evolve(&mut y, a, b)?;
    let images = std::array::from_fn(|k| crate::model::flat_to_op(&y[36 * k..36 * (k + 1)]));
    Ok(GroundMap { images })
}

/// Rotation fidelity for a given spec.
pub fn rotation_fidelity(spec: &RotationSpec, config: &SystemConfig, settings: &PropagationSettings) -> Result<f64> {
    Ok(ground_map(spec, config, settings)?.average_fidelity(&spec.ideal()))
}

/// Result of a numerical rotation calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedRotation {
    pub spec: RotationSpec,
    pub fidelity: f64,
    /// Minus branch of the analytical formula (μeV).
    pub analytical_seed: f64,
    pub seed_fidelity: f64,
    /// Scanned `(detuning, fidelity)` points for the chosen phase offset.
    pub scan: Vec<(f64, f64)>,
}

/// Points in the coarse calibration scan.
const CALIBRATION_POINTS: usize = 21;
/// Half-width of the calibration scan around the seed (μeV).
const CALIBRATION_SPAN: f64 = 10.0;

/// Maximizes f on [a, b] by golden-section search; returns (x, f(x)).
pub(crate) fn golden_max<F>(mut a: f64, mut b: f64, tol: f64, mut f: F) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while (b - a).abs() > tol {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2)?;
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1)?;
        }
    }
    Ok(if f1 >= f2 { (x1, f1) } else { (x2, f2) })
}

/// Finds the detuning (and G₂ phase offset 0 or π) that best realizes
/// R_ϑ(Θ), starting from the analytical seed.
pub fn calibrate_rotation(
    theta: f64,
    azimuth: f64,
    config: &SystemConfig,
    settings: &PropagationSettings,
) -> Result<CalibratedRotation> {
    let width = ROTATION_WIDTH;
    let (seed, _) = analytical_detuning(theta, config.tu_splitting(), HBAR / width)?;
    let grid: Vec<f64> = (0..CALIBRATION_POINTS)
        .map(|i| seed - CALIBRATION_SPAN + 2.0 * CALIBRATION_SPAN * i as f64 / (CALIBRATION_POINTS - 1) as f64)
        .collect();
    let mut best: Option<(f64, Vec<(f64, f64)>)> = None;
    for offset in [0.0, PI] {
        let scan: Vec<(f64, f64)> = grid
            .par_iter()
            .map(|&d| rotation_fidelity(&RotationSpec::new(theta, azimuth, d, offset), config, settings).map(|f| (d, f)))
            .collect::<Result<_>>()?;
        let top = scan.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        if best.as_ref().map_or(true, |(_, s)| top > s.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max)) {
            best = Some((offset, scan));
        }
    }
    let (offset, scan) = best.expect("two offsets scanned");
    let imax = scan
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    if imax == 0 || imax + 1 == scan.len() {
        return Err(Error::CalibrationBracket { seed, curve: scan });
    }
    let seed_fidelity = [0.0, PI]
        .iter()
        .map(|&o| rotation_fidelity(&RotationSpec::new(theta, azimuth, seed, o), config, settings))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    let (d, f) = golden_max(scan[imax - 1].0, scan[imax + 1].0, 1e-3, |d| {
        rotation_fidelity(&RotationSpec::new(theta, azimuth, d, offset), config, settings)
    })?;
    let (d, f) = if f >= scan[imax].1 { (d, f) } else { scan[imax] };
    Ok(CalibratedRotation {
        spec: RotationSpec::new(theta, azimuth, d, offset),
        fidelity: f,
        analytical_seed: seed,
        seed_fidelity,
        scan,
    })
}

/// One row of a detuning sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetuningPoint {
    pub detuning: f64,
    pub pop_g1: f64,
    pub pop_g2: f64,
    pub leakage: f64,
    pub fidelity_pi: f64,
    /// Best of the two axis orientations compatible with the pulse phases.
    pub fidelity_half_pi: f64,
}

/// Sweeps the common detuning of `template` with the emitter starting in G₁.
pub fn sweep_detuning(
    detunings: &[f64],
    config: &SystemConfig,
    template: &RotationSpec,
    settings: &PropagationSettings,
) -> Result<Vec<DetuningPoint>> {
    if detunings.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Input("detuning grid must be strictly increasing".into()));
    }
    let axis = template.phase_g2 - template.phase_g1;
    detunings
        .par_iter()
        .map(|&d| {
            let spec = RotationSpec { detuning: d, ..*template };
            let map = ground_map(&spec, config, settings)?;
            let out = map.images[0];
            let pop_g1 = out[(0, 0)].re;
            let pop_g2 = out[(1, 1)].re;
            let fidelity_pi = map.average_fidelity(&ideal_rotation(PI, axis));
            let fidelity_half_pi = map
                .average_fidelity(&ideal_rotation(PI / 2.0, axis))
                .max(map.average_fidelity(&ideal_rotation(PI / 2.0, axis + PI)));
            Ok(DetuningPoint {
                detuning: d,
                pop_g1,
                pop_g2,
                leakage: (out.trace().re - pop_g1 - pop_g2).max(0.0),
                fidelity_pi,
                fidelity_half_pi,
            })
        })
        .collect()
}

/// Extraction amplitude that leaves no coherent G₁ amplitude behind while the
/// cycling transition decays during the pulse. Returns (amplitude,
/// excitation probability), the latter counting population already emitted.
pub fn calibrate_extraction(config: &SystemConfig, width: f64, settings: &PropagationSettings) -> Result<(f64, f64)> {
    let residual = |alpha: f64| -> Result<f64> {
        let pulse = Pulse::new(Transition::Cycling1, alpha, width, 0.0);
        let (a, b) = pulse.support();
        let prop = Propagator::new(config, &Drive::from_pulses(vec![pulse]), *settings)?;
        let rho = prop.final_state(&crate::model::DensityMatrix::ground_superposition(a), b)?;
        Ok(rho.element(StateIndex::G1, StateIndex::G2).norm())
    };
    let (alpha, neg) = golden_max(0.4, 0.6, 1e-7, |a| residual(a).map(|r| -r))?;
    // From an equal superposition |ρ_G₁G₂| = |c_G₁|/√2.
    Ok((alpha, 1.0 - 2.0 * neg * neg))
}
