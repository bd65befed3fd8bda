//! Shared driving noise: Brownian increments on a uniform grid plus exact
//! compound-Poisson jump times and marks.
//!
//! Every process built from one [`DrivingPath`] (the full system, both
//! auxiliary bounds, the closed-form solution) sees the same `W` and `N`.

use std::io::{Read, Write};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, StandardNormal};

use crate::error::SimError;
use crate::model::MarkSpace;

pub const RNG_ALGORITHM: &str = "chacha8-stream-v1";

/// A jump event: time in `(0, T]` and 0-based mark index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    pub time: f64,
    pub mark: usize,
}

/// One realization of the driving noise on `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DrivingPath {
    pub horizon: f64,
    pub step: f64,
    /// `W(t_{k+1}) - W(t_k)`, each Normal(0, h).
    pub increments: Vec<f64>,
    /// Strictly increasing in time.
    pub jumps: Vec<Jump>,
    pub seed: u64,
    pub stream: u64,
    pub rng_algorithm: String,
}

/// Number of uniform steps, or an error when `T / h` is not an integer.
pub fn step_count(horizon: f64, step: f64) -> Result<usize, SimError> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(SimError::Config(format!("horizon T = {horizon} must be finite and > 0")));
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(SimError::Config(format!("step h = {step} must be finite and > 0")));
    }
    let ratio = horizon / step;
    let m = ratio.round();
    if m < 1.0 || (ratio - m).abs() > 1e-9 * ratio.max(1.0) {
        return Err(SimError::Config(format!("T / h = {ratio} is not a positive integer")));
    }
    Ok(m as usize)
}

/// Generator for path `stream` of the master seed. Brownian increments and
/// jumps come from separate ChaCha streams so neither depends on the other.
fn stream_rngs(seed: u64, stream: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut w = ChaCha8Rng::seed_from_u64(seed);
    w.set_stream(2 * stream);
    let mut n = ChaCha8Rng::seed_from_u64(seed);
    n.set_stream(2 * stream + 1);
    (w, n)
}

/// Sample a path on `[0, T]` with step `h`.
pub fn sample_driving_path(
    marks: &MarkSpace,
    horizon: f64,
    step: f64,
    seed: u64,
) -> Result<DrivingPath, SimError> {
    sample_path_stream(marks, horizon, step, seed, 0)
}

/// Sample the `stream`-th independent path of a master seed. Monte Carlo
/// replicate `j` uses stream `j`, so results do not depend on scheduling.
pub fn sample_path_stream(
    marks: &MarkSpace,
    horizon: f64,
    step: f64,
    seed: u64,
    stream: u64,
) -> Result<DrivingPath, SimError> {
    let m = step_count(horizon, step)?;
    let (mut w_rng, mut n_rng) = stream_rngs(seed, stream);
    let scale = step.sqrt();
    let increments: Vec<f64> = (0..m)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut w_rng);
            z * scale
        })
        .collect();

    let mut jumps = Vec::new();
    let rate = marks.total_mass();
    if rate > 0.0 {
        let exp = Exp::new(rate).expect("positive finite rate");
        let pick = WeightedIndex::new(&marks.weights).expect("positive weights");
        let mut t = 0.0;
        loop {
            let next = t + exp.sample(&mut n_rng);
            if next > horizon {
                break;
            }
            let mark = pick.sample(&mut n_rng);
            // an inter-arrival below the spacing of floats at t collapses
            // onto t; keep times strictly increasing
            if next > t {
                jumps.push(Jump { time: next, mark });
            }
            t = next;
        }
    }

    Ok(DrivingPath {
        horizon,
        step,
        increments,
        jumps,
        seed,
        stream,
        rng_algorithm: RNG_ALGORITHM.to_string(),
    })
}

impl DrivingPath {
    /// Deterministic path from explicit increments and jumps.
    pub fn from_parts(
        horizon: f64,
        step: f64,
        increments: Vec<f64>,
        jumps: Vec<Jump>,
    ) -> Result<Self, SimError> {
        let m = step_count(horizon, step)?;
        if increments.len() != m {
            return Err(SimError::Config(format!(
                "{} increments for {m} steps",
                increments.len()
            )));
        }
        if jumps.iter().any(|j| !(j.time > 0.0 && j.time <= horizon))
            || jumps.windows(2).any(|w| w[1].time <= w[0].time)
        {
            return Err(SimError::Config(
                "jump times must be strictly increasing in (0, T]".into(),
            ));
        }
        Ok(DrivingPath {
            horizon,
            step,
            increments,
            jumps,
            seed: 0,
            stream: 0,
            rng_algorithm: "explicit".to_string(),
        })
    }

    pub fn steps(&self) -> usize {
        self.increments.len()
    }

    /// `W(T)`.
    pub fn terminal_brownian(&self) -> f64 {
        self.increments.iter().sum()
    }

    /// The same realization seen on a grid `factor` times coarser: each
    /// coarse increment is the sum of `factor` consecutive fine ones.
    pub fn coarsen(&self, factor: usize) -> Result<DrivingPath, SimError> {
        if factor == 0 || !self.steps().is_multiple_of(factor) {
            return Err(SimError::Config(format!(
                "cannot coarsen {} steps by factor {factor}",
                self.steps()
            )));
        }
        Ok(DrivingPath {
            step: self.step * factor as f64,
            increments: self
                .increments
                .chunks(factor)
                .map(|c| c.iter().sum())
                .collect(),
            ..self.clone()
        })
    }

    /// Restrict to `[0, horizon]` where `horizon` is a multiple of `h`.
    pub fn truncate(&self, horizon: f64) -> Result<DrivingPath, SimError> {
        let m = step_count(horizon, self.step)?;
        if m > self.steps() {
            return Err(SimError::Config(format!("{horizon} beyond path horizon")));
        }
        Ok(DrivingPath {
            horizon,
            increments: self.increments[..m].to_vec(),
            jumps: self.jumps.iter().copied().filter(|j| j.time <= horizon).collect(),
            ..self.clone()
        })
    }
}

const DUMP_MAGIC: &[u8; 4] = b"LVJP";
const DUMP_VERSION: u32 = 1;

/// Binary dump: magic, version, T, h, M, K, seed, then M increments as
/// little-endian f64, then a u64 jump count and `(time f64, mark u32)` records.
pub fn write_path_dump<W: Write>(path: &DrivingPath, marks: usize, mut out: W) -> std::io::Result<()> {
    out.write_all(DUMP_MAGIC)?;
    out.write_all(&DUMP_VERSION.to_le_bytes())?;
    out.write_all(&path.horizon.to_le_bytes())?;
    out.write_all(&path.step.to_le_bytes())?;
    out.write_all(&(path.steps() as u64).to_le_bytes())?;
    out.write_all(&(marks as u32).to_le_bytes())?;
    out.write_all(&path.seed.to_le_bytes())?;
    for x in &path.increments {
        out.write_all(&x.to_le_bytes())?;
    }
    out.write_all(&(path.jumps.len() as u64).to_le_bytes())?;
    for j in &path.jumps {
        out.write_all(&j.time.to_le_bytes())?;
        out.write_all(&(j.mark as u32).to_le_bytes())?;
    }
    Ok(())
}

/// Inverse of [`write_path_dump`]; returns the path and the mark count.
pub fn read_path_dump<R: Read>(mut input: R) -> Result<(DrivingPath, usize), SimError> {
    fn take<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N], SimError> {
        let mut buf = [0u8; N];
        r.read_exact(&mut buf)
            .map_err(|e| SimError::Dump(e.to_string()))?;
        Ok(buf)
    }
    let r = &mut input;
    if &take::<4, _>(r)? != DUMP_MAGIC {
        return Err(SimError::Dump("bad magic".into()));
    }
    let version = u32::from_le_bytes(take(r)?);
    if version != DUMP_VERSION {
        return Err(SimError::Dump(format!("unsupported version {version}")));
    }
    let horizon = f64::from_le_bytes(take(r)?);
    let step = f64::from_le_bytes(take(r)?);
    let m = u64::from_le_bytes(take(r)?) as usize;
    let k = u32::from_le_bytes(take(r)?) as usize;
    let seed = u64::from_le_bytes(take(r)?);
    let increments = (0..m)
        .map(|_| take(r).map(f64::from_le_bytes))
        .collect::<Result<Vec<_>, _>>()?;
    let count = u64::from_le_bytes(take(r)?) as usize;
    let mut jumps = Vec::with_capacity(count);
    for _ in 0..count {
        let time = f64::from_le_bytes(take(r)?);
        let mark = u32::from_le_bytes(take(r)?) as usize;
        if mark >= k {
            return Err(SimError::Dump(format!("mark {mark} out of range for K = {k}")));
        }
        jumps.push(Jump { time, mark });
    }
    let mut path = DrivingPath::from_parts(horizon, step, increments, jumps)?;
    path.seed = seed;
    path.rng_algorithm = RNG_ALGORITHM.to_string();
    Ok((path, k))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotKind {
    /// Uniform grid node or coefficient breakpoint.
    Grid,
    /// Left limit at a jump time.
    Left,
    /// Value right after a jump.
    Post,
}

impl SlotKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SlotKind::Grid => "grid",
            SlotKind::Left => "left",
            SlotKind::Post => "post",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slot {
    pub time: f64,
    pub kind: SlotKind,
    /// Index into [`DrivingPath::jumps`], set on `Post` slots.
    pub jump: Option<usize>,
    /// Brownian increment since the previous slot.
    pub dw: f64,
    /// Running `W(time)`.
    pub w: f64,
}

/// Sorted union of grid nodes, breakpoints and jump times. Each jump time
/// carries a `Left` and a `Post` slot; `W` is linear inside a grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MergedGrid {
    slots: Vec<Slot>,
    horizon: f64,
}

/// Merge the uniform grid of `path` with its jump times.
pub fn merge_grid(path: &DrivingPath) -> MergedGrid {
    MergedGrid::build(path, &[])
}

impl MergedGrid {
    /// Merge with additional grid times (e.g. coefficient breakpoints).
    /// Extra times outside `(0, T)` are ignored.
    pub fn build(path: &DrivingPath, extra_times: &[f64]) -> MergedGrid {
        let h = path.step;
        let m = path.steps();
        let tol = 1e-12 * path.horizon.max(1.0);
        let node = |k: usize| if k == m { path.horizon } else { k as f64 * h };

        // interior events within each cell: (time, Some(jump) | None)
        let mut events: Vec<(f64, Option<usize>)> = path
            .jumps
            .iter()
            .enumerate()
            .map(|(j, jump)| (jump.time, Some(j)))
            .chain(
                extra_times
                    .iter()
                    .filter(|&&t| t > 0.0 && t < path.horizon)
                    .map(|&t| (t, None)),
            )
            .collect();
        events.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.is_some().cmp(&a.1.is_some())));

        let mut slots = Vec::with_capacity(m + 1 + 2 * path.jumps.len() + extra_times.len());
        slots.push(Slot {
            time: 0.0,
            kind: SlotKind::Grid,
            jump: None,
            dw: 0.0,
            w: 0.0,
        });
        let mut w = 0.0;
        let mut ev = events.into_iter().peekable();
        for k in 0..m {
            let (t0, t1) = (node(k), node(k + 1));
            let inc = path.increments[k];
            let mut used = 0.0;
            let mut last_t = t0;
            // events strictly inside the cell
            while let Some(&(t, jump)) = ev.peek() {
                if t >= t1 - tol {
                    break;
                }
                ev.next();
                if (t - last_t).abs() <= tol {
                    // coincides with the previous slot time
                    if let Some(j) = jump {
                        let at = t_of(&slots);
                        push_jump(&mut slots, at, j);
                    }
                    continue;
                }
                let dw = inc * (t - last_t) / h;
                used += dw;
                w += dw;
                last_t = t;
                match jump {
                    Some(j) => {
                        slots.push(Slot {
                            time: t,
                            kind: SlotKind::Left,
                            jump: None,
                            dw,
                            w,
                        });
                        slots.push(Slot {
                            time: t,
                            kind: SlotKind::Post,
                            jump: Some(j),
                            dw: 0.0,
                            w,
                        });
                    }
                    None => slots.push(Slot {
                        time: t,
                        kind: SlotKind::Grid,
                        jump: None,
                        dw,
                        w,
                    }),
                }
            }
            let dw = inc - used;
            w += dw;
            // events at the node itself: jumps turn the node into left/post
            let mut node_jumps = Vec::new();
            while let Some(&(t, jump)) = ev.peek() {
                if t > t1 + tol {
                    break;
                }
                ev.next();
                if let Some(j) = jump {
                    node_jumps.push(j);
                }
            }
            if node_jumps.is_empty() {
                slots.push(Slot {
                    time: t1,
                    kind: SlotKind::Grid,
                    jump: None,
                    dw,
                    w,
                });
            } else {
                slots.push(Slot {
                    time: t1,
                    kind: SlotKind::Left,
                    jump: None,
                    dw,
                    w,
                });
                for j in node_jumps {
                    push_jump(&mut slots, t1, j);
                }
            }
        }
        MergedGrid {
            slots,
            horizon: path.horizon,
        }
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.slots.iter().map(|s| s.time)
    }

    /// Index of the last slot with `time <= t` (post-jump value at a jump).
    pub fn slot_at(&self, t: f64) -> usize {
        let tol = 1e-12 * self.horizon.max(1.0);
        self.slots
            .partition_point(|s| s.time <= t + tol)
            .saturating_sub(1)
    }
}

fn t_of(slots: &[Slot]) -> f64 {
    slots.last().map_or(0.0, |s| s.time)
}

/// Append a jump at the current slot time. A second jump at the same time
/// composes multiplicatively through an extra left/post pair.
fn push_jump(slots: &mut Vec<Slot>, time: f64, jump: usize) {
    let last = *slots.last().expect("grid starts at 0");
    if last.kind == SlotKind::Grid {
        slots.pop();
        slots.push(Slot {
            kind: SlotKind::Left,
            ..last
        });
    } else if last.kind == SlotKind::Post {
        slots.push(Slot {
            kind: SlotKind::Left,
            jump: None,
            dw: 0.0,
            ..last
        });
    }
    slots.push(Slot {
        time,
        kind: SlotKind::Post,
        jump: Some(jump),
        dw: 0.0,
        w: last.w,
    });
}
