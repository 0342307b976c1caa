//! Command-line front end: `timebin <subcommand> [flags]`.

use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::json;

use crate::config::{GridSpec, RunConfig};
use crate::correlations::{
    integrate_on, photon_density_matrix, stabilizer_patterns, CorrelationGrid, OpPattern, SuperGrid,
};
use crate::error::{Error, Result};
use crate::protocol::{build_plan, run_protocol, DriveMode, ProtocolContext};
use crate::pulses::{analytical_detuning, sweep_detuning, RotationSpec};
use crate::model::HBAR;
use crate::stabilizers::{
    higher_order_stabilizers, sweep_loss, sweep_phase, LossChannel, PipelineSetup, StabilizerValue,
};

/// Grid points per axis for correlation integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Resolution {
    Quick,
    Desk,
    Paper,
    Custom(usize),
}

impl Resolution {
    pub fn points(self) -> usize {
        match self {
            Resolution::Quick => 32,
            Resolution::Desk => 64,
            Resolution::Paper => 240,
            Resolution::Custom(n) => n,
        }
    }
}

impl FromStr for Resolution {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "quick" => Ok(Resolution::Quick),
            "desk" => Ok(Resolution::Desk),
            "paper" => Ok(Resolution::Paper),
            _ => s
                .parse::<usize>()
                .map(Resolution::Custom)
                .map_err(|_| format!("`{s}` is neither quick, desk, paper nor an integer")),
        }
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Resolution::Quick => write!(f, "quick"),
            Resolution::Desk => write!(f, "desk"),
            Resolution::Paper => write!(f, "paper"),
            Resolution::Custom(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    Detuning,
    Phase,
    Loss,
}

#[derive(Debug, Parser)]
#[command(name = "timebin", version, about = "Time-bin cluster-state emission from a six-level emitter")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// TOML configuration file; defaults are used when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "timebin-out")]
    pub out: PathBuf,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Calibrate the π and π/2 rotations and the extraction pulse.
    Calibrate,
    /// Simulate the emission sequence and write the dynamics.
    Simulate {
        #[arg(long, default_value_t = 2)]
        qubits: usize,
        /// Output sampling step (ps).
        #[arg(long, default_value_t = 2.0)]
        sample_step: f64,
    },
    /// Stabilizers, witness and length bound.
    Stabilizers {
        #[arg(long, default_value = "desk")]
        resolution: Resolution,
        /// Number of ⟨ZΦZ⟩ stabilizers; the protocol has kmax + 2 qubits.
        #[arg(long, default_value_t = 3)]
        kmax: usize,
        /// Cluster length N entering the witness (defaults to kmax + 2).
        #[arg(long)]
        qubits: Option<usize>,
    },
    /// Parameter sweeps.
    Sweep {
        #[arg(long = "sweep-kind", value_enum)]
        kind: SweepKind,
        /// start:stop:count; overrides the config grid.
        #[arg(long)]
        grid: Option<GridSpec>,
        #[arg(long, default_value = "desk")]
        resolution: Resolution,
    },
    /// Binned correlations and the photon density matrices.
    Correlate {
        #[arg(long, default_value = "desk")]
        resolution: Resolution,
        #[arg(long, default_value_t = 3)]
        qubits: usize,
        /// Anchor of the first axis (ps).
        #[arg(long, default_value_t = 0.0)]
        t0: f64,
        /// Save the full mesh of this pattern (repeatable).
        #[arg(long = "save-grid")]
        save_grid: Vec<OpPattern>,
    },
    /// Integrate a saved correlation grid.
    Integrate {
        #[arg(long)]
        input: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Calibrate => "calibrate",
            Command::Simulate { .. } => "simulate",
            Command::Stabilizers { .. } => "stabilizers",
            Command::Sweep { .. } => "sweep",
            Command::Correlate { .. } => "correlate",
            Command::Integrate { .. } => "integrate",
        }
    }
}

/// Written next to every set of outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub code_version: String,
    pub config: RunConfig,
    pub parameters: serde_json::Value,
    pub resolution: Option<serde_json::Value>,
    pub workers: usize,
    pub wall_clock_s: f64,
    pub outputs: Vec<String>,
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Outputs { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let f = BufWriter::new(File::create(self.path(name))?);
        serde_json::to_writer_pretty(f, value)?;
        Ok(())
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
        let mut w = csv::Writer::from_path(self.path(name))?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

fn complex_cells(z: Complex64) -> Vec<String> {
    vec![num(z.re), num(z.im), num(z.norm()), num(z.arg())]
}

fn resolution_json(r: Resolution) -> serde_json::Value {
    json!({ "ladder": r.to_string(), "points_per_axis": r.points() })
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let workers = cli.common.workers.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    if workers == 0 {
        return Err(Error::Input("--workers must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Input(format!("cannot start worker pool: {e}")))?;
    let start = Instant::now();
    let mut out = Outputs::new(&cli.common.out)?;
    let name = cli.command.name();
    let (parameters, resolution) = pool.install(|| dispatch(&cli.command, &cfg, &mut out))?;
    let manifest = RunManifest {
        subcommand: name.to_string(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg,
        parameters,
        resolution: resolution.map(resolution_json),
        workers,
        wall_clock_s: start.elapsed().as_secs_f64(),
        outputs: out.files.clone(),
    };
    out.json("manifest.json", &manifest)?;
    Ok(())
}

type Dispatched = (serde_json::Value, Option<Resolution>);

fn dispatch(command: &Command, cfg: &RunConfig, out: &mut Outputs) -> Result<Dispatched> {
    match command {
        Command::Calibrate => calibrate(cfg, out),
        Command::Simulate { qubits, sample_step } => simulate(cfg, *qubits, *sample_step, out),
        Command::Stabilizers { resolution, kmax, qubits } => stabilizers(cfg, *resolution, *kmax, *qubits, out),
        Command::Sweep { kind, grid, resolution } => sweep(cfg, *kind, *grid, *resolution, out),
        Command::Correlate { resolution, qubits, t0, save_grid } => {
            correlate(cfg, *resolution, *qubits, *t0, save_grid, out)
        }
        Command::Integrate { input } => integrate(input, out),
    }
}

fn degenerate_note(cfg: &RunConfig) {
    if cfg.system.is_degenerate_lambda() {
        eprintln!(
            "note: with no ground splitting and no T/U splitting the emitter is a plain degenerate Λ system; \
             the rotation calibration has no frequency selectivity to work with"
        );
    }
}

fn calibrate(cfg: &RunConfig, out: &mut Outputs) -> Result<Dispatched> {
    degenerate_note(cfg);
    let rot = cfg.resolve_pulses()?;
    let sigma = HBAR / rot.pi.width;
    let analytical = |theta: f64| analytical_detuning(theta, cfg.system.tu_splitting(), sigma).ok();
    let a_pi = analytical(std::f64::consts::PI);
    let a_half = analytical(std::f64::consts::FRAC_PI_2);
    println!("rotation   analytical (ueV)   numerical (ueV)   G2 phase offset   fidelity");
    let show = |label: &str, a: Option<(f64, f64)>, spec: &RotationSpec, fid: Option<f64>| {
        let a = a.map(|(m, _)| format!("{m:>10.3}")).unwrap_or_else(|| "       n/a".into());
        let f = fid.map(|f| format!("{f:.6}")).unwrap_or_else(|| "given".into());
        println!("{label:<10} {a:>18} {:>17.3} {:>17.4} {f:>10}", spec.detuning, spec.phase_g2 - spec.azimuth);
    };
    show("pi", a_pi, &rot.pi, rot.pi_calibration.as_ref().map(|c| c.fidelity));
    show("pi/2", a_half, &rot.half_pi, rot.half_pi_calibration.as_ref().map(|c| c.fidelity));
    let alpha = rot.extraction_amplitude;
    match rot.extraction_excitation {
        Some(p) => println!("extraction amplitude {alpha:.8} (excitation probability {p:.9})"),
        None => println!("extraction amplitude {alpha:.8} (given)"),
    }
    out.json(
        "calibration.json",
        &json!({
            "analytical_ueV": { "pi": a_pi, "half_pi": a_half },
            "pi": rot.pi_calibration.clone().map(|c| serde_json::to_value(c)).transpose()?
                .unwrap_or(serde_json::to_value(rot.pi)?),
            "half_pi": rot.half_pi_calibration.clone().map(|c| serde_json::to_value(c)).transpose()?
                .unwrap_or(serde_json::to_value(rot.half_pi)?),
            "extraction": { "amplitude": alpha, "excitation_probability": rot.extraction_excitation },
            "degenerate_lambda": cfg.system.is_degenerate_lambda(),
        }),
    )?;
    Ok((json!({}), None))
}

fn simulate(cfg: &RunConfig, qubits: usize, sample_step: f64, out: &mut Outputs) -> Result<Dispatched> {
    degenerate_note(cfg);
    let rot = cfg.resolve_pulses()?;
    let plan = build_plan(qubits, cfg.bins, cfg.protocol_pulses(&rot), &cfg.system)?;
    let t = Instant::now();
    let rec = run_protocol(&plan, &cfg.system, &cfg.solver, sample_step)?;
    let runtime = t.elapsed().as_secs_f64();
    rec.write_csv(BufWriter::new(File::create(out.path("emission.csv"))?))?;
    out.json(
        "emission.json",
        &json!({
            "bin_emission": rec.bin_emission,
            "total_emission": rec.total_emission(),
            "snapshots": rec.snapshots,
            "steps": plan.steps,
            "propagation_runtime_s": runtime,
        }),
    )?;
    for (b, e) in rec.bin_emission.iter().enumerate() {
        println!("bin {b}: emitted {e:.6}");
    }
    Ok((json!({ "qubits": qubits, "sample_step_ps": sample_step }), None))
}

fn pulsed_setup(cfg: &RunConfig, resolution: Resolution) -> Result<PipelineSetup> {
    let rot = cfg.resolve_pulses()?;
    Ok(PipelineSetup {
        config: cfg.system.clone(),
        bins: cfg.bins,
        pulses: cfg.protocol_pulses(&rot),
        settings: cfg.solver,
        mode: DriveMode::Pulsed,
        resolution: resolution.points(),
    })
}

fn stabilizer_rows(values: &[(&str, StabilizerValue)]) -> Vec<Vec<String>> {
    values
        .iter()
        .map(|(kind, v)| {
            let mut row = vec![kind.to_string(), v.index.to_string(), num(v.t0)];
            row.extend(complex_cells(v.value));
            row
        })
        .collect()
}

fn stabilizers(
    cfg: &RunConfig,
    resolution: Resolution,
    kmax: usize,
    qubits: Option<usize>,
    out: &mut Outputs,
) -> Result<Dispatched> {
    degenerate_note(cfg);
    let setup = pulsed_setup(cfg, resolution)?;
    let ctx = setup.context(kmax + 2)?;
    let report = higher_order_stabilizers(&ctx, kmax, resolution.points())?;
    let n = qubits.unwrap_or(kmax + 2);
    let w = report.witness(n);
    let mut values = vec![("phi_z", report.phi_z)];
    values.extend(report.z_phi_z.iter().map(|v| ("z_phi_z", *v)));
    out.csv(
        "stabilizers.csv",
        &["kind", "index", "t0_ps", "re", "im", "abs", "arg_rad"],
        stabilizer_rows(&values),
    )?;
    out.json("stabilizers.json", &report)?;
    out.json("witness.json", &w)?;
    println!("|<PhiZ>| = {:.6}", report.phi_z.magnitude());
    for v in &report.z_phi_z {
        println!("|<ZPhiZ>|^({}) = {:.6}", v.index, v.magnitude());
    }
    println!("witness <W> = {:.6} for N = {n} (entangled: {})", w.value, w.entangled);
    println!("length bound: {:?}", w.length_bound);
    Ok((json!({ "kmax": kmax, "witness_qubits": n }), Some(resolution)))
}

fn sweep(
    cfg: &RunConfig,
    kind: SweepKind,
    grid: Option<GridSpec>,
    resolution: Resolution,
    out: &mut Outputs,
) -> Result<Dispatched> {
    degenerate_note(cfg);
    match kind {
        SweepKind::Detuning => {
            let points = grid.unwrap_or(cfg.sweep.detuning).points();
            let template = RotationSpec::new(std::f64::consts::PI, cfg.pulses.pi_azimuth, 0.0, 0.0);
            let rows = sweep_detuning(&points, &cfg.system, &template, &cfg.solver)?;
            out.csv(
                "sweep_detuning.csv",
                &["detuning_ueV", "pop_G1", "pop_G2", "leakage", "fidelity_pi", "fidelity_half_pi"],
                rows.iter()
                    .map(|r| {
                        vec![num(r.detuning), num(r.pop_g1), num(r.pop_g2), num(r.leakage), num(r.fidelity_pi), num(r.fidelity_half_pi)]
                    })
                    .collect(),
            )?;
            Ok((json!({ "kind": kind, "grid": points }), None))
        }
        SweepKind::Phase => {
            let points = grid.map(|g| g.points()).unwrap_or_else(|| cfg.sweep.phase_points());
            let setup = pulsed_setup(cfg, resolution)?;
            let rows = sweep_phase(&points, cfg.sweep.phase_target, &setup)?;
            let header = [
                "phase_rad", "phi_z_re", "phi_z_im", "phi_z_abs", "phi_z_arg_rad", "z_phi_z_re", "z_phi_z_im",
                "z_phi_z_abs", "z_phi_z_arg_rad",
            ];
            out.csv(
                "sweep_phase.csv",
                &header,
                rows.iter()
                    .map(|p| {
                        let mut r = vec![num(p.phase)];
                        r.extend(complex_cells(p.phi_z));
                        r.extend(complex_cells(p.z_phi_z));
                        r
                    })
                    .collect(),
            )?;
            let mean = |f: &dyn Fn(&crate::stabilizers::PhasePoint) -> f64| rows.iter().map(f).sum::<f64>() / rows.len() as f64;
            println!("mean |<PhiZ>| = {:.6}, mean |<ZPhiZ>| = {:.6}", mean(&|p| p.phi_z.norm()), mean(&|p| p.z_phi_z.norm()));
            Ok((json!({ "kind": kind, "target": cfg.sweep.phase_target, "grid": points }), Some(resolution)))
        }
        SweepKind::Loss => {
            let points = grid.unwrap_or(cfg.sweep.loss).points();
            let setup = pulsed_setup(cfg, resolution)?;
            let mut rows = Vec::new();
            for ch in &cfg.sweep.loss_channels {
                for p in sweep_loss(&points, *ch, &setup)? {
                    let name = match p.channel {
                        LossChannel::Radiative => "radiative",
                        LossChannel::Dephasing => "dephasing",
                    };
                    let mut r = vec![name.to_string(), num(p.rate)];
                    r.extend(complex_cells(p.phi_z));
                    r.extend(complex_cells(p.z_phi_z));
                    rows.push(r);
                }
            }
            let header = [
                "channel", "rate_ueV", "phi_z_re", "phi_z_im", "phi_z_abs", "phi_z_arg_rad", "z_phi_z_re",
                "z_phi_z_im", "z_phi_z_abs", "z_phi_z_arg_rad",
            ];
            out.csv("sweep_loss.csv", &header, rows)?;
            Ok((json!({ "kind": kind, "channels": cfg.sweep.loss_channels, "grid": points }), Some(resolution)))
        }
    }
}

fn correlate(
    cfg: &RunConfig,
    resolution: Resolution,
    qubits: usize,
    t0: f64,
    save: &[OpPattern],
    out: &mut Outputs,
) -> Result<Dispatched> {
    degenerate_note(cfg);
    let rot = cfg.resolve_pulses()?;
    let plan = build_plan(qubits, cfg.bins, cfg.protocol_pulses(&rot), &cfg.system)?;
    let ctx = ProtocolContext::new(plan, &cfg.system, &cfg.solver)?;
    let duration = 2.0 * qubits as f64 * cfg.bins.bin_length;
    let order = if duration >= t0 + 6.0 * cfg.bins.bin_length - 1e-6 { 3 } else { 2 };
    let grid = SuperGrid::build(&ctx, t0, 2 * order, resolution.points())?;
    let mut patterns = OpPattern::all(2);
    if order == 3 {
        patterns.extend(stabilizer_patterns(3));
    }
    let binned = integrate_on(&grid, &patterns)?;
    let rho = photon_density_matrix(&binned, 2)?;
    let labels = ["EE", "EL", "LE", "LL"];
    let mut rows = Vec::new();
    for r in 0..4 {
        for c in 0..4 {
            rows.push(vec![labels[r].into(), labels[c].into(), num(rho[(r, c)].re), num(rho[(r, c)].im)]);
        }
    }
    out.csv("two_photon_density_matrix.csv", &["row", "col", "re", "im"], rows)?;
    out.json("correlations.json", &binned)?;
    for p in save {
        let g = CorrelationGrid::compute(&grid, p)?;
        g.save(&out.path(&format!("grid_{p}.tbgrid")))?;
    }
    Ok((json!({ "qubits": qubits, "t0_ps": t0, "order": order, "saved": save }), Some(resolution)))
}

fn integrate(input: &Path, out: &mut Outputs) -> Result<Dispatched> {
    let g = CorrelationGrid::load(input)?;
    let v = g.integrate();
    let report = json!({
        "pattern": g.pattern,
        "resolution": g.resolution,
        "anchors_ps": g.anchors,
        "bin_length_ps": g.bin_length,
        "integral_ps_k": [v.re, v.im],
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    out.json("integral.json", &report)?;
    Ok((json!({ "input": input }), None))
}
