use thiserror::Error;

/// Everything that can go wrong while configuring or running a simulation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown transition label `{0}` (expected cycling-1, cycling-2, rotation-g1 or rotation-g2)")]
    UnknownTransition(String),

    #[error("invalid propagation settings: {0}")]
    Settings(String),

    #[error("step size underflow at t = {time:.6} ps (h = {step:.3e} ps)")]
    StepSizeUnderflow { time: f64, step: f64 },

    #[error("no detuning solution for theta = {theta:.6} rad; admissible range is {admissible}")]
    NoDetuningSolution { theta: f64, admissible: String },

    #[error("calibration failed to bracket a fidelity maximum around {seed:.3} ueV")]
    CalibrationBracket {
        seed: f64,
        /// Scanned `(detuning_ueV, fidelity)` points.
        curve: Vec<(f64, f64)>,
    },

    #[error("scheduling error: {0}")]
    Scheduling(String),

    #[error("time-ordering violation for pattern {pattern}: {detail}")]
    PlanOrdering { pattern: String, detail: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::UnknownTransition(_)
            | Error::Settings(_)
            | Error::Scheduling(_)
            | Error::Input(_) => 2,
            Error::StepSizeUnderflow { .. }
            | Error::NoDetuningSolution { .. }
            | Error::CalibrationBracket { .. }
            | Error::PlanOrdering { .. } => 3,
            Error::Degenerate(_) => 4,
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => 1,
        }
    }
}
