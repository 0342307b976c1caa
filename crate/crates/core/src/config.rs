//! TOML run configuration.
//!
//! ```toml
//! schema_version = 1
//!
//! [system]
//! gamma_cyc = 1.2
//!
//! [pulses]
//! half_pi_azimuth = 0.0
//!
//! [bins]
//! bin_length = 4000.0
//!
//! [solver]
//! rtol = 1e-8
//!
//! [sweep]
//! detuning = "-100:100:200"
//! ```
//!
//! Every section and key is optional; missing values take the defaults.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SystemConfig;
use crate::propagator::PropagationSettings;
use crate::protocol::{BinConfig, ProtocolPulses};
use crate::pulses::{calibrate_extraction, calibrate_rotation, CalibratedRotation, RotationSpec, EXTRACTION_WIDTH};
use crate::stabilizers::{LossChannel, PhaseTarget};

pub const SCHEMA_VERSION: u32 = 1;

/// Evenly spaced points "start:stop:count", both ends included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl GridSpec {
    pub fn points(&self) -> Vec<f64> {
        match self.count {
            0 => Vec::new(),
            1 => vec![self.start],
            n => (0..n).map(|i| self.start + (self.stop - self.start) * i as f64 / (n - 1) as f64).collect(),
        }
    }
}

impl FromStr for GridSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let bad = || Error::Input(format!("grid `{s}` is not of the form start:stop:count"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let start: f64 = parts[0].parse().map_err(|_| bad())?;
        let stop: f64 = parts[1].parse().map_err(|_| bad())?;
        let count: usize = parts[2].parse().map_err(|_| bad())?;
        if !start.is_finite() || !stop.is_finite() {
            return Err(bad());
        }
        if count == 0 {
            return Err(Error::Input(format!("grid `{s}` is empty")));
        }
        if count > 1 && stop <= start {
            return Err(Error::Input(format!("grid `{s}` must have stop > start")));
        }
        Ok(GridSpec { start, stop, count })
    }
}

impl TryFrom<String> for GridSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<GridSpec> for String {
    fn from(g: GridSpec) -> String {
        g.to_string()
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.stop, self.count)
    }
}

/// Pulse shapes and, optionally, fixed rotation parameters that bypass the
/// calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseConfig {
    /// Fixed extraction amplitude; calibrated against the cycling decay when
    /// absent.
    pub extraction_amplitude: Option<f64>,
    /// 1/σ of the extraction pulse (ps).
    pub extraction_width: f64,
    /// Target azimuth of the π rotation (rad).
    pub pi_azimuth: f64,
    /// Target azimuth of the π/2 rotation (rad).
    pub half_pi_azimuth: f64,
    pub pi: Option<RotationSpec>,
    pub half_pi: Option<RotationSpec>,
}

impl Default for PulseConfig {
    fn default() -> Self {
        PulseConfig {
            extraction_amplitude: None,
            extraction_width: EXTRACTION_WIDTH,
            pi_azimuth: 0.0,
            half_pi_azimuth: 0.0,
            pi: None,
            half_pi: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// Common rotation detuning (μeV).
    pub detuning: GridSpec,
    /// Extra rotation phase (rad); 24 points over [0, 2π) when absent.
    pub phase: Option<GridSpec>,
    pub phase_target: PhaseTarget,
    /// Loss rate (μeV).
    pub loss: GridSpec,
    pub loss_channels: Vec<LossChannel>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            detuning: GridSpec { start: -100.0, stop: 100.0, count: 200 },
            phase: None,
            phase_target: PhaseTarget::HalfPi,
            loss: GridSpec { start: 0.0, stop: 2.5, count: 11 },
            loss_channels: vec![LossChannel::Radiative, LossChannel::Dephasing],
        }
    }
}

impl SweepConfig {
    pub fn phase_points(&self) -> Vec<f64> {
        match self.phase {
            Some(g) => g.points(),
            None => (0..24).map(|i| TAU * i as f64 / 24.0).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub schema_version: u32,
    pub system: SystemConfig,
    pub pulses: PulseConfig,
    pub bins: BinConfig,
    pub solver: PropagationSettings,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            system: SystemConfig::default(),
            pulses: PulseConfig::default(),
            bins: BinConfig::default(),
            solver: PropagationSettings::default(),
            sweep: SweepConfig::default(),
        }
    }
}

/// Pulses actually used by a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedPulses {
    pub extraction_amplitude: f64,
    /// Excitation probability of a calibrated extraction pulse.
    pub extraction_excitation: Option<f64>,
    pub pi: RotationSpec,
    pub half_pi: RotationSpec,
    /// Present when the rotation was calibrated rather than given.
    pub pi_calibration: Option<CalibratedRotation>,
    pub half_pi_calibration: Option<CalibratedRotation>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.system.validate()?;
        self.solver.validate()?;
        if !(self.pulses.extraction_amplitude.unwrap_or(1.0) > 0.0 && self.pulses.extraction_width > 0.0) {
            return Err(Error::Config("extraction amplitude and width must be positive".into()));
        }
        for spec in self.pulses.pi.iter().chain(&self.pulses.half_pi) {
            spec.validate()?;
        }
        Ok(())
    }

    /// Uses fixed pulse parameters where given, otherwise calibrates them.
    pub fn resolve_pulses(&self) -> Result<ResolvedPulses> {
        let get = |fixed: Option<RotationSpec>, theta: f64, azimuth: f64| -> Result<(RotationSpec, Option<CalibratedRotation>)> {
            match fixed {
                Some(spec) => Ok((spec, None)),
                None => {
                    let c = calibrate_rotation(theta, azimuth, &self.system, &self.solver)?;
                    Ok((c.spec, Some(c)))
                }
            }
        };
        let (pi, pi_calibration) = get(self.pulses.pi, PI, self.pulses.pi_azimuth)?;
        let (half_pi, half_pi_calibration) = get(self.pulses.half_pi, FRAC_PI_2, self.pulses.half_pi_azimuth)?;
        let (extraction_amplitude, extraction_excitation) = match self.pulses.extraction_amplitude {
            Some(a) => (a, None),
            None => {
                let (a, p) = calibrate_extraction(&self.system, self.pulses.extraction_width, &self.solver)?;
                (a, Some(p))
            }
        };
        Ok(ResolvedPulses { extraction_amplitude, extraction_excitation, pi, half_pi, pi_calibration, half_pi_calibration })
    }

    pub fn protocol_pulses(&self, resolved: &ResolvedPulses) -> ProtocolPulses {
        ProtocolPulses {
            extraction_amplitude: resolved.extraction_amplitude,
            extraction_width: self.pulses.extraction_width,
            pi: resolved.pi,
            half_pi: resolved.half_pi,
        }
    }
}
