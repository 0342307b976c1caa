//! Multi-time photon correlations of the cycling transition via the quantum
//! regression theorem, and their integrals over time bins.
//!
//! A pattern of length 2K over {E, L} describes
//! ⟨a†(t₁+s₀)…a†(t_K+s_{K−1}) a(t_K+s_K)…a(t₁+s_{2K−1})⟩ with E → 0 and
//! L → +T. Axis k runs over the bin [b_k, b_k + T] with b_k = t₀ + 2kT.
//!
//! Evaluation follows one rule: walk the operator time stamps in time order,
//! multiply annihilators from the left and creators from the right, evolve
//! with the full Lindblad generator in between, and take the trace at the end.
//! Three routes implement it:
//!
//! * [`evaluate_pattern`]: pointwise, with adaptive propagation between events;
//! * [`CorrelationGrid`]: the full mesh of values on a uniform grid;
//! * [`integrate_pattern`]: the bin integral through a backward sweep of dual
//!   functionals, without materializing the mesh.
//!
//! The last two share a [`SuperGrid`] of one-step propagators.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{op_to_flat, ONE, ZERO};
use crate::protocol::ProtocolContext;

const G1: usize = 0;
const X1: usize = 2;
const BLOCK: usize = 36;
const SUPER: usize = BLOCK * BLOCK;

/// Smallest accepted grid resolution per axis.
pub const MIN_RESOLUTION: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Bin {
    E,
    L,
}

impl Bin {
    fn is_late(self) -> bool {
        self == Bin::L
    }

    pub fn index(self) -> usize {
        match self {
            Bin::E => 0,
            Bin::L => 1,
        }
    }
}

/// Early/late operator pattern; see the module docs for the slot layout.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct OpPattern {
    slots: Vec<Bin>,
}

impl OpPattern {
    pub fn new(slots: Vec<Bin>) -> Result<Self> {
        if slots.len() != 4 && slots.len() != 6 {
            return Err(Error::Input(format!("pattern length must be 4 or 6, got {}", slots.len())));
        }
        Ok(OpPattern { slots })
    }

    /// Number of photons K (2 or 3).
    pub fn order(&self) -> usize {
        self.slots.len() / 2
    }

    pub fn slots(&self) -> &[Bin] {
        &self.slots
    }

    /// Bin of the creation operator of axis `a`.
    pub fn creation(&self, a: usize) -> Bin {
        self.slots[a]
    }

    /// Bin of the annihilation operator of axis `a`.
    pub fn annihilation(&self, a: usize) -> Bin {
        self.slots[self.slots.len() - 1 - a]
    }

    /// Pattern of the complex-conjugate correlation.
    pub fn reversed(&self) -> OpPattern {
        OpPattern { slots: self.slots.iter().rev().copied().collect() }
    }

    /// Creation and annihilation share the bin on every axis.
    pub fn is_population(&self) -> bool {
        (0..self.order()).all(|a| self.creation(a) == self.annihilation(a))
    }

    /// All 2^(2K) patterns of order K in lexicographic order (E < L).
    pub fn all(order: usize) -> Vec<OpPattern> {
        let len = 2 * order;
        (0..1usize << len)
            .map(|bits| OpPattern {
                slots: (0..len).map(|p| if bits >> (len - 1 - p) & 1 == 1 { Bin::L } else { Bin::E }).collect(),
            })
            .collect()
    }

    /// The 2^K population patterns entering the normalization.
    pub fn populations(order: usize) -> Vec<OpPattern> {
        OpPattern::all(order).into_iter().filter(|p| p.is_population()).collect()
    }
}

impl fmt::Display for OpPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.slots {
            f.write_str(match s {
                Bin::E => "E",
                Bin::L => "L",
            })?;
        }
        Ok(())
    }
}

impl FromStr for OpPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let slots = s
            .chars()
            .map(|c| match c {
                'E' | 'e' => Ok(Bin::E),
                'L' | 'l' => Ok(Bin::L),
                _ => Err(Error::Input(format!("pattern `{s}` may only contain E and L"))),
            })
            .collect::<Result<Vec<_>>>()?;
        OpPattern::new(slots)
    }
}

impl TryFrom<String> for OpPattern {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<OpPattern> for String {
    fn from(p: OpPattern) -> String {
        p.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum OpKind {
    /// X → aX
    Annihilate,
    /// X → Xa†
    Create,
}

/// X → aX with a = |G₁⟩⟨X₁|.
fn left_a(x: &mut [Complex64]) {
    for c in 0..6 {
        x[6 * G1 + c] = x[6 * X1 + c];
    }
    for r in 1..6 {
        for c in 0..6 {
            x[6 * r + c] = ZERO;
        }
    }
}

/// X → Xa†.
fn right_adag(x: &mut [Complex64]) {
    for r in 0..6 {
        x[6 * r + G1] = x[6 * r + X1];
        for c in 1..6 {
            x[6 * r + c] = ZERO;
        }
    }
}

/// Dual of X → aX: D → aᵀD.
fn dual_left_a(d: &mut [Complex64]) {
    for c in 0..6 {
        d[6 * X1 + c] = d[6 * G1 + c];
    }
    for r in 0..6 {
        if r != X1 {
            for c in 0..6 {
                d[6 * r + c] = ZERO;
            }
        }
    }
}

/// Dual of X → Xa†: D → D(a†)ᵀ.
fn dual_right_adag(d: &mut [Complex64]) {
    for r in 0..6 {
        d[6 * r + X1] = d[6 * r + G1];
        for c in 0..6 {
            if c != X1 {
                d[6 * r + c] = ZERO;
            }
        }
    }
}

fn apply_op(kind: OpKind, x: &mut [Complex64]) {
    match kind {
        OpKind::Annihilate => left_a(x),
        OpKind::Create => right_adag(x),
    }
}

fn apply_dual(kind: OpKind, d: &mut [Complex64]) {
    match kind {
        OpKind::Annihilate => dual_left_a(d),
        OpKind::Create => dual_right_adag(d),
    }
}

fn trace_functional() -> [Complex64; BLOCK] {
    let mut d = [ZERO; BLOCK];
    for i in 0..6 {
        d[7 * i] = ONE;
    }
    d
}

fn pair(d: &[Complex64], x: &[Complex64]) -> Complex64 {
    d.iter().zip(x).fold(ZERO, |acc, (a, b)| acc + a * b)
}

/// Pointwise evaluation with adaptive propagation. `times` holds the K axis
/// times t₁…t_K (absolute, ps); L slots add one bin length.
pub fn evaluate_pattern(ctx: &ProtocolContext, pattern: &OpPattern, times: &[f64]) -> Result<Complex64> {
    let k = pattern.order();
    if times.len() != k {
        return Err(Error::Input(format!("pattern {pattern} needs {k} times, got {}", times.len())));
    }
    let t_bin = ctx.bin_length();
    let shift = |b: Bin| if b.is_late() { t_bin } else { 0.0 };
    let creations: Vec<f64> = (0..k).map(|a| times[a] + shift(pattern.creation(a))).collect();
    let annihilations: Vec<f64> = (0..k).map(|a| times[a] + shift(pattern.annihilation(a))).collect();
    for a in 1..k {
        if creations[a] < creations[a - 1] {
            return Err(Error::PlanOrdering {
                pattern: pattern.to_string(),
                detail: format!("creation times {creations:?} are not time ordered"),
            });
        }
        if annihilations[a] < annihilations[a - 1] {
            return Err(Error::PlanOrdering {
                pattern: pattern.to_string(),
                detail: format!("annihilation times {annihilations:?} are not time ordered"),
            });
        }
    }
    let mut events: Vec<(f64, OpKind)> = creations
        .iter()
        .map(|&t| (t, OpKind::Create))
        .chain(annihilations.iter().map(|&t| (t, OpKind::Annihilate)))
        .collect();
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let start = events[0].0;
    if start < 0.0 {
        return Err(Error::Input(format!("event time {start} precedes the protocol start")));
    }
    let rho = ctx.state_at(start)?;
    let mut x = op_to_flat(&rho.matrix).to_vec();
    let mut now = start;
    for (t, kind) in events {
        if t > now {
            ctx.propagator.evolve(&mut x, now, t)?;
            now = t;
        }
        apply_op(kind, &mut x);
    }
    Ok((0..6).map(|i| x[7 * i]).sum())
}

/// G² at axis times (t₁, t₂).
pub fn evaluate_g2(ctx: &ProtocolContext, pattern: &OpPattern, t1: f64, t2: f64) -> Result<Complex64> {
    if pattern.order() != 2 {
        return Err(Error::Input(format!("{pattern} is not a second-order pattern")));
    }
    evaluate_pattern(ctx, pattern, &[t1, t2])
}

/// G³ at axis times (t₁, t₂, t₃).
pub fn evaluate_g3(ctx: &ProtocolContext, pattern: &OpPattern, t1: f64, t2: f64, t3: f64) -> Result<Complex64> {
    if pattern.order() != 3 {
        return Err(Error::Input(format!("{pattern} is not a third-order pattern")));
    }
    evaluate_pattern(ctx, pattern, &[t1, t2, t3])
}

/// One-step propagators on the uniform grid τ_j = t₀ + j·h, h = T/m, and the
/// state ρ(τ_j) at every node.
#[derive(Debug, Clone)]
pub struct SuperGrid {
    t0: f64,
    bin_length: f64,
    /// Intervals per bin (resolution − 1).
    m: usize,
    n_intervals: usize,
    /// Row-major 36×36 maps, one per interval.
    steps: Vec<Complex64>,
    states: Vec<Complex64>,
}

impl SuperGrid {
    /// Grid over `n_bins` bins from `t0` with `resolution` points per bin.
    pub fn build(ctx: &ProtocolContext, t0: f64, n_bins: usize, resolution: usize) -> Result<Self> {
        if resolution < MIN_RESOLUTION {
            return Err(Error::Input(format!("resolution must be at least {MIN_RESOLUTION}, got {resolution}")));
        }
        let bin_length = ctx.bin_length();
        let end = t0 + n_bins as f64 * bin_length;
        if t0 < 0.0 || end > ctx.plan.duration() + 1e-6 {
            return Err(Error::Input(format!(
                "correlation window [{t0}, {end}] ps exceeds the protocol [0, {}] ps",
                ctx.plan.duration()
            )));
        }
        let m = resolution - 1;
        let n_intervals = m * n_bins;
        let h = bin_length / m as f64;
        let node = |j: usize| t0 + j as f64 * h;
        let blocks: Vec<Vec<Complex64>> = (0..n_intervals)
            .into_par_iter()
            .map(|j| {
                let mut y = vec![ZERO; SUPER];
                for k in 0..BLOCK {
                    y[BLOCK * k + k] = ONE;
                }
                ctx.propagator.evolve(&mut y, node(j), node(j + 1))?;
                let mut s = vec![ZERO; SUPER];
                for k in 0..BLOCK {
                    for r in 0..BLOCK {
                        s[BLOCK * r + k] = y[BLOCK * k + r];
                    }
                }
                Ok(s)
            })
            .collect::<Result<_>>()?;
        let steps: Vec<Complex64> = blocks.into_iter().flatten().collect();
        let rho0 = ctx.state_at(t0)?;
        let mut states = Vec::with_capacity((n_intervals + 1) * BLOCK);
        states.extend_from_slice(&rho0.to_flat());
        let mut x = rho0.to_flat();
        let mut next = [ZERO; BLOCK];
        for j in 0..n_intervals {
            apply_s(&steps[j * SUPER..(j + 1) * SUPER], &x, &mut next);
            x = next;
            states.extend_from_slice(&x);
        }
        Ok(SuperGrid { t0, bin_length, m, n_intervals, steps, states })
    }

    pub fn resolution(&self) -> usize {
        self.m + 1
    }

    pub fn start(&self) -> f64 {
        self.t0
    }

    pub fn step(&self) -> f64 {
        self.bin_length / self.m as f64
    }

    pub fn bins(&self) -> usize {
        self.n_intervals / self.m
    }

    pub fn time(&self, j: usize) -> f64 {
        self.t0 + j as f64 * self.step()
    }

    /// ρ(τ_j) in flat storage.
    pub fn state(&self, j: usize) -> &[Complex64] {
        &self.states[j * BLOCK..(j + 1) * BLOCK]
    }

    fn map(&self, j: usize) -> &[Complex64] {
        &self.steps[j * SUPER..(j + 1) * SUPER]
    }

    fn forward(&self, j: usize, x: &mut [Complex64; BLOCK]) {
        let mut out = [ZERO; BLOCK];
        apply_s(self.map(j), x, &mut out);
        *x = out;
    }

    fn backward(&self, j: usize, d: &mut [Complex64; BLOCK]) {
        let mut out = [ZERO; BLOCK];
        apply_st(self.map(j), d, &mut out);
        *d = out;
    }

    /// Trapezoid weight of node i on one axis.
    fn weight(&self, i: usize) -> f64 {
        let h = self.step();
        if i == 0 || i == self.m {
            0.5 * h
        } else {
            h
        }
    }

    fn check(&self, pattern: &OpPattern) -> Result<()> {
        let need = 2 * pattern.order();
        if self.bins() < need {
            return Err(Error::Input(format!(
                "pattern {pattern} needs a grid over {need} bins, this one covers {}",
                self.bins()
            )));
        }
        Ok(())
    }
}

fn apply_s(s: &[Complex64], x: &[Complex64], out: &mut [Complex64]) {
    for r in 0..BLOCK {
        let row = &s[r * BLOCK..(r + 1) * BLOCK];
        out[r] = row.iter().zip(x).fold(ZERO, |acc, (a, b)| acc + a * b);
    }
}

fn apply_st(s: &[Complex64], d: &[Complex64], out: &mut [Complex64]) {
    out.fill(ZERO);
    for r in 0..BLOCK {
        let dr = d[r];
        if dr == ZERO {
            continue;
        }
        let row = &s[r * BLOCK..(r + 1) * BLOCK];
        for k in 0..BLOCK {
            out[k] += row[k] * dr;
        }
    }
}

/// Grid indices and operators of one axis at node i.
#[derive(Debug, Clone, Copy)]
struct AxisEvents {
    first: usize,
    last: usize,
    first_ops: [Option<OpKind>; 2],
    last_op: Option<OpKind>,
}

fn axis_events(pattern: &OpPattern, axis: usize, i: usize, m: usize) -> AxisEvents {
    let base = 2 * axis * m + i;
    let c = base + if pattern.creation(axis).is_late() { m } else { 0 };
    let u = base + if pattern.annihilation(axis).is_late() { m } else { 0 };
    if c == u {
        AxisEvents { first: c, last: c, first_ops: [Some(OpKind::Annihilate), Some(OpKind::Create)], last_op: None }
    } else if c < u {
        AxisEvents { first: c, last: u, first_ops: [Some(OpKind::Create), None], last_op: Some(OpKind::Annihilate) }
    } else {
        AxisEvents { first: u, last: c, first_ops: [Some(OpKind::Annihilate), None], last_op: Some(OpKind::Create) }
    }
}

/// Pulls the functional `d` (valid after the axis' last event) back through
/// the axis to just before its first event.
fn pull_axis(grid: &SuperGrid, ev: &AxisEvents, d: &mut [Complex64; BLOCK]) {
    if let Some(op) = ev.last_op {
        apply_dual(op, d);
        for j in (ev.first..ev.last).rev() {
            grid.backward(j, d);
        }
    }
    for op in ev.first_ops.iter().flatten() {
        apply_dual(*op, d);
    }
}

/// Pushes the state `x` (at the axis' first event) through the axis to just
/// after its last event.
fn push_axis(grid: &SuperGrid, ev: &AxisEvents, x: &mut [Complex64; BLOCK]) {
    for op in ev.first_ops.iter().flatten() {
        apply_op(*op, x);
    }
    if let Some(op) = ev.last_op {
        for j in ev.first..ev.last {
            grid.forward(j, x);
        }
        apply_op(op, x);
    }
}

/// Bin integral of one pattern by a backward sweep of dual functionals.
pub fn integrate_pattern(grid: &SuperGrid, pattern: &OpPattern) -> Result<Complex64> {
    grid.check(pattern)?;
    let k = pattern.order();
    let m = grid.m;
    let n = m + 1;
    let mut after: Option<Vec<[Complex64; BLOCK]>> = None;
    for axis in (0..k).rev() {
        let mut firsts = Vec::with_capacity(n);
        let mut duals = Vec::with_capacity(n);
        for i in 0..n {
            let ev = axis_events(pattern, axis, i, m);
            let mut d = match &after {
                Some(lam) => lam[ev.last],
                None => trace_functional(),
            };
            pull_axis(grid, &ev, &mut d);
            firsts.push(ev.first);
            duals.push(d);
        }
        if axis == 0 {
            let total = (0..n).fold(ZERO, |acc, i| acc + pair(&duals[i], grid.state(firsts[i])) * grid.weight(i));
            return Ok(total);
        }
        let top = *firsts.iter().max().expect("non-empty axis");
        let mut lam = vec![[ZERO; BLOCK]; top + 1];
        let mut run = [ZERO; BLOCK];
        let mut next_i = n;
        for j in (0..=top).rev() {
            if j < top {
                grid.backward(j, &mut run);
            }
            while next_i > 0 && firsts[next_i - 1] == j {
                next_i -= 1;
                let w = grid.weight(next_i);
                for (r, v) in run.iter_mut().zip(&duals[next_i]) {
                    *r += v * w;
                }
            }
            lam[j] = run;
        }
        after = Some(lam);
    }
    unreachable!("the sweep returns at axis 0")
}

/// Values of one pattern on the full (resolution)^K mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationGrid {
    pub pattern: OpPattern,
    /// Axis anchors b_k (ps).
    pub anchors: Vec<f64>,
    pub bin_length: f64,
    pub resolution: usize,
    /// Row-major over (t₁, t₂[, t₃]).
    #[serde(skip)]
    pub values: Vec<Complex64>,
}

impl CorrelationGrid {
    pub fn compute(grid: &SuperGrid, pattern: &OpPattern) -> Result<Self> {
        grid.check(pattern)?;
        let k = pattern.order();
        let m = grid.m;
        let n = m + 1;
        let last = k - 1;
        let last_duals: Vec<(usize, [Complex64; BLOCK])> = (0..n)
            .map(|i| {
                let ev = axis_events(pattern, last, i, m);
                let mut d = trace_functional();
                pull_axis(grid, &ev, &mut d);
                (ev.first, d)
            })
            .collect();
        let rows: Vec<Vec<Complex64>> = (0..n)
            .into_par_iter()
            .map(|i0| {
                let mut out = Vec::with_capacity(n.pow(last as u32));
                let ev = axis_events(pattern, 0, i0, m);
                let mut x = [ZERO; BLOCK];
                x.copy_from_slice(grid.state(ev.first));
                push_axis(grid, &ev, &mut x);
                mesh_rec(grid, pattern, 1, ev.last, x, &last_duals, &mut out);
                out
            })
            .collect();
        let anchors = (0..k).map(|a| grid.t0 + 2.0 * a as f64 * grid.bin_length).collect();
        Ok(CorrelationGrid {
            pattern: pattern.clone(),
            anchors,
            bin_length: grid.bin_length,
            resolution: n,
            values: rows.into_iter().flatten().collect(),
        })
    }

    /// Axis times of node `i` on axis `a`.
    pub fn time(&self, axis: usize, i: usize) -> f64 {
        self.anchors[axis] + i as f64 * self.bin_length / (self.resolution - 1) as f64
    }

    pub fn value(&self, idx: &[usize]) -> Complex64 {
        let flat = idx.iter().fold(0, |acc, &i| acc * self.resolution + i);
        self.values[flat]
    }

    /// Tensor-product trapezoid integral.
    pub fn integrate(&self) -> Complex64 {
        let n = self.resolution;
        let h = self.bin_length / (n - 1) as f64;
        let w = |i: usize| if i == 0 || i == n - 1 { 0.5 * h } else { h };
        let k = self.pattern.order();
        let mut total = ZERO;
        for (flat, v) in self.values.iter().enumerate() {
            let mut rest = flat;
            let mut wt = 1.0;
            for _ in 0..k {
                wt *= w(rest % n);
                rest /= n;
            }
            total += v * wt;
        }
        total
    }

    /// Writes the self-describing binary format: magic, header length,
    /// JSON header, then (re, im) little-endian f64 pairs.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = serde_json::to_vec(self)?;
        w.write_all(GRID_MAGIC)?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        for v in &self.values {
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != GRID_MAGIC {
            return Err(Error::Input("not a correlation grid file".into()));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len) as usize;
        let mut header = vec![0u8; len];
        r.read_exact(&mut header)?;
        let mut grid: CorrelationGrid = serde_json::from_slice(&header)?;
        if grid.resolution < 2 || grid.anchors.len() != grid.pattern.order() {
            return Err(Error::Input("inconsistent correlation grid header".into()));
        }
        let count = grid.resolution.pow(grid.pattern.order() as u32);
        let mut buf = vec![0u8; 16 * count];
        r.read_exact(&mut buf)?;
        grid.values = buf
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
                let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
                Complex64::new(re, im)
            })
            .collect();
        Ok(grid)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(f)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

const GRID_MAGIC: &[u8; 8] = b"TBGRID1\n";

fn mesh_rec(
    grid: &SuperGrid,
    pattern: &OpPattern,
    axis: usize,
    from: usize,
    x: [Complex64; BLOCK],
    last_duals: &[(usize, [Complex64; BLOCK])],
    out: &mut Vec<Complex64>,
) {
    let k = pattern.order();
    let m = grid.m;
    let n = m + 1;
    let mut y = x;
    let mut j = from;
    if axis == k - 1 {
        for (first, d) in last_duals {
            while j < *first {
                grid.forward(j, &mut y);
                j += 1;
            }
            out.push(pair(d, &y));
        }
        return;
    }
    for i in 0..n {
        let ev = axis_events(pattern, axis, i, m);
        while j < ev.first {
            grid.forward(j, &mut y);
            j += 1;
        }
        let mut z = y;
        push_axis(grid, &ev, &mut z);
        mesh_rec(grid, pattern, axis + 1, ev.last, z, last_duals, out);
    }
}

/// Bin integrals for a set of patterns plus their normalizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedCorrelations {
    pub g2: BTreeMap<String, Complex64>,
    pub g3: BTreeMap<String, Complex64>,
    /// Σ Ḡ²_ijji, when all four population patterns are present.
    pub g2_total: Option<f64>,
    /// Σ Ḡ³_ijkkji, when all eight population patterns are present.
    pub g3_total: Option<f64>,
    pub t0: f64,
    pub bin_length: f64,
    pub resolution: usize,
    pub quadrature: String,
}

impl BinnedCorrelations {
    pub fn from_values(
        values: Vec<(OpPattern, Complex64)>,
        t0: f64,
        bin_length: f64,
        resolution: usize,
    ) -> Self {
        let mut g2 = BTreeMap::new();
        let mut g3 = BTreeMap::new();
        for (p, v) in values {
            if p.order() == 2 {
                g2.insert(p.to_string(), v);
            } else {
                g3.insert(p.to_string(), v);
            }
        }
        let total = |map: &BTreeMap<String, Complex64>, order: usize| {
            OpPattern::populations(order)
                .iter()
                .map(|p| map.get(&p.to_string()).map(|v| v.re))
                .sum::<Option<f64>>()
        };
        let g2_total = total(&g2, 2);
        let g3_total = total(&g3, 3);
        BinnedCorrelations { g2, g3, g2_total, g3_total, t0, bin_length, resolution, quadrature: "trapezoid".into() }
    }

    pub fn get(&self, pattern: &str) -> Result<Complex64> {
        let map = if pattern.len() == 4 { &self.g2 } else { &self.g3 };
        map.get(pattern).copied().ok_or_else(|| Error::Input(format!("pattern {pattern} was not computed")))
    }

    /// Largest |Im|/|Re| over the population patterns.
    pub fn population_imaginary_residue(&self) -> f64 {
        self.g2
            .iter()
            .chain(&self.g3)
            .filter(|(k, _)| k.parse::<OpPattern>().map(|p| p.is_population()).unwrap_or(false))
            .map(|(_, v)| v.im.abs() / v.re.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }
}

/// Patterns needed for the stabilizer numerators and normalizations.
pub fn stabilizer_patterns(order: usize) -> Vec<OpPattern> {
    let numerators: &[&str] = if order == 2 { &["EEEL", "ELLL"] } else { &["EEEELE", "LELLLL", "EELLLE", "LEEELL"] };
    let mut out: Vec<OpPattern> = numerators.iter().map(|s| s.parse().expect("valid literal")).collect();
    out.extend(OpPattern::populations(order));
    out
}

/// Integrates `patterns` on a fresh grid anchored at `t0`.
pub fn integrate_bins(
    ctx: &ProtocolContext,
    t0: f64,
    resolution: usize,
    patterns: &[OpPattern],
) -> Result<BinnedCorrelations> {
    let order = patterns.iter().map(|p| p.order()).max().unwrap_or(2);
    let grid = SuperGrid::build(ctx, t0, 2 * order, resolution)?;
    integrate_on(&grid, patterns)
}

/// Integrates `patterns` on an existing grid.
pub fn integrate_on(grid: &SuperGrid, patterns: &[OpPattern]) -> Result<BinnedCorrelations> {
    let values = patterns
        .par_iter()
        .map(|p| integrate_pattern(grid, p).map(|v| (p.clone(), v)))
        .collect::<Result<Vec<_>>>()?;
    Ok(BinnedCorrelations::from_values(values, grid.t0, grid.bin_length, grid.resolution()))
}

/// K-photon density matrix in the basis |x₁…x_K⟩ (E = 0, L = 1, first photon
/// most significant): ρ_{(x),(u)} = Ḡ_{u₁…u_K x_K…x₁}/Ḡ_tot.
pub fn photon_density_matrix(binned: &BinnedCorrelations, order: usize) -> Result<nalgebra::DMatrix<Complex64>> {
    let dim = 1usize << order;
    let map = if order == 2 { &binned.g2 } else { &binned.g3 };
    let total = if order == 2 { binned.g2_total } else { binned.g3_total }
        .ok_or_else(|| Error::Input("population patterns are missing".into()))?;
    if !(total.abs() > 1e-6) {
        return Err(Error::Degenerate(format!("photon correlations vanish (total {total:.3e})")));
    }
    let letter = |bit: usize| if bit == 0 { 'E' } else { 'L' };
    let digits = |v: usize| (0..order).map(|p| (v >> (order - 1 - p)) & 1).collect::<Vec<_>>();
    let mut rho = nalgebra::DMatrix::from_element(dim, dim, ZERO);
    for x in 0..dim {
        for u in 0..dim {
            let dx = digits(x);
            let du = digits(u);
            let key: String = du.iter().map(|&b| letter(b)).chain(dx.iter().rev().map(|&b| letter(b))).collect();
            let v = map.get(&key).ok_or_else(|| Error::Input(format!("pattern {key} was not computed")))?;
            rho[(x, u)] = v / total;
        }
    }
    Ok(rho)
}

/// Two-photon density matrix in the basis {EE, EL, LE, LL}.
pub fn two_photon_density_matrix(ctx: &ProtocolContext, resolution: usize) -> Result<nalgebra::Matrix4<Complex64>> {
    let binned = integrate_bins(ctx, 0.0, resolution, &OpPattern::all(2))?;
    let d = photon_density_matrix(&binned, 2)?;
    Ok(nalgebra::Matrix4::from_fn(|r, c| d[(r, c)]))
}
