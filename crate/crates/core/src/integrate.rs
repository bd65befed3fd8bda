//! Log-Euler integration of the full system and of the two scalar
//! auxiliary systems that bound each species from above and below.
//!
//! Between merged-grid slots, with coefficients frozen at the left end,
//!
//! ```text
//! ln X_i += (a_i - sum_j b_ij X_j - sigma_i^2 / 2 - sum_k gamma_ik lambda_k) dt + sigma_i dW
//! ```
//!
//! and at a jump with mark `k`, `ln X_i += ln(1 + gamma_ik)`. Working in log
//! space keeps every value positive.

use std::sync::Arc;

use crate::error::SimError;
use crate::model::{InitialState, ModelSpec};
use crate::noise::{DrivingPath, MergedGrid, SlotKind};

/// `exp` over/underflows past this magnitude of the log-population.
pub const LOG_LIMIT: f64 = 745.0;

/// Positive sample path of one or more species on a merged grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: Arc<MergedGrid>,
    /// `values[i][slot]`.
    values: Vec<Vec<f64>>,
    diverged_at: Option<f64>,
}

impl Trajectory {
    pub fn new(grid: Arc<MergedGrid>, values: Vec<Vec<f64>>) -> Self {
        Trajectory {
            grid,
            values,
            diverged_at: None,
        }
    }

    pub fn grid(&self) -> &Arc<MergedGrid> {
        &self.grid
    }

    pub fn species_count(&self) -> usize {
        self.values.len()
    }

    pub fn species(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    /// Number of slots computed (short of the grid when diverged).
    pub fn len(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// First time at which `|ln X_i|` left the representable range.
    pub fn diverged_at(&self) -> Option<f64> {
        self.diverged_at
    }

    pub fn is_diverged(&self) -> bool {
        self.diverged_at.is_some()
    }

    pub fn value(&self, i: usize, slot: usize) -> f64 {
        self.values[i][slot]
    }

    /// State vector at `slot`.
    pub fn state(&self, slot: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[slot]).collect()
    }

    /// Euclidean norm of the state at `slot`.
    pub fn norm(&self, slot: usize) -> f64 {
        self.values.iter().map(|v| v[slot] * v[slot]).sum::<f64>().sqrt()
    }

    pub fn terminal(&self, i: usize) -> f64 {
        *self.values[i].last().expect("non-empty trajectory")
    }
}

/// Grid shared by every process driven by `path` under `model`: uniform
/// nodes, jump times and coefficient breakpoints.
pub fn model_grid(model: &ModelSpec, path: &DrivingPath) -> Arc<MergedGrid> {
    Arc::new(MergedGrid::build(path, &model.breakpoints()))
}

/// How the competition from other species enters species `i`'s drift.
enum Competition<'a> {
    /// The full system: `sum_{j != i} b_ij X_j` from the running state.
    System,
    /// No other species (upper bound).
    None,
    /// `sum_{j != i} b_ij Y_j` from precomputed upper bounds (lower bound).
    Upper(&'a [Trajectory]),
}

fn check_species(model: &ModelSpec, i: usize) -> Result<(), SimError> {
    if i >= model.n {
        return Err(SimError::Species(i));
    }
    Ok(())
}

fn check_x0(value: f64) -> Result<(), SimError> {
    if !(value.is_finite() && value > 0.0) {
        return Err(SimError::Config(format!("initial value {value} must be finite and > 0")));
    }
    Ok(())
}

fn log_euler(
    model: &ModelSpec,
    grid: Arc<MergedGrid>,
    path: &DrivingPath,
    species: &[usize],
    x0: &[f64],
    competition: Competition<'_>,
) -> Result<Trajectory, SimError> {
    let slots = grid.slots();
    let m = species.len();
    let mut logs: Vec<f64> = x0.iter().map(|x| x.ln()).collect();
    let mut values: Vec<Vec<f64>> = x0
        .iter()
        .map(|&x| {
            let mut v = Vec::with_capacity(slots.len());
            v.push(x);
            v
        })
        .collect();
    if let Competition::Upper(upper) = &competition {
        if upper.len() != model.n
            || upper.iter().any(|u| !Arc::ptr_eq(&u.grid, &grid) && *u.grid != *grid)
        {
            return Err(SimError::GridMismatch(
                "upper trajectories must cover every species on the same grid".into(),
            ));
        }
        if upper.iter().any(|u| u.len() != slots.len()) {
            return Err(SimError::GridMismatch("an upper trajectory is incomplete".into()));
        }
    }

    let mut diverged_at = None;
    let mut current = vec![0.0; m];
    'outer: for s in 0..slots.len() - 1 {
        let (left, next) = (&slots[s], &slots[s + 1]);
        if next.kind == SlotKind::Post {
            let jump = path.jumps[next.jump.expect("post slot carries its jump")];
            for (slot_log, &i) in logs.iter_mut().zip(species) {
                let g = model.gamma[i][jump.mark].eval(jump.time);
                if g <= -1.0 {
                    return Err(SimError::Domain {
                        value: g,
                        time: jump.time,
                    });
                }
                *slot_log += g.ln_1p();
            }
        } else {
            let t = left.time;
            let dt = next.time - t;
            for (c, v) in current.iter_mut().zip(&values) {
                *c = v[s];
            }
            for (idx, &i) in species.iter().enumerate() {
                let sigma = model.sigma[i].eval(t);
                let base = model.a[i].eval(t) - 0.5 * sigma * sigma - model.compensator(i, t);
                let off: f64 = match &competition {
                    Competition::None => 0.0,
                    Competition::System => species
                        .iter()
                        .enumerate()
                        .filter(|&(_, &j)| j != i)
                        .map(|(jdx, &j)| model.b[i][j].eval(t) * current[jdx])
                        .sum(),
                    Competition::Upper(upper) => (0..model.n)
                        .filter(|&j| j != i)
                        .map(|j| model.b[i][j].eval(t) * upper[j].values[0][s])
                        .sum(),
                };
                let drift = (base - model.b[i][i].eval(t) * current[idx]) - off;
                logs[idx] += drift * dt + sigma * next.dw;
            }
        }
        for l in &logs {
            if l.is_nan() {
                return Err(SimError::NotANumber {
                    what: "log-population",
                    time: next.time,
                });
            }
            if l.abs() > LOG_LIMIT {
                diverged_at = Some(next.time);
                break 'outer;
            }
        }
        for (v, l) in values.iter_mut().zip(&logs) {
            v.push(l.exp());
        }
    }
    Ok(Trajectory {
        grid,
        values,
        diverged_at,
    })
}

/// Integrate the full n-species system along `path`.
pub fn simulate_system(
    model: &ModelSpec,
    x0: &InitialState,
    path: &DrivingPath,
) -> Result<Trajectory, SimError> {
    simulate_system_on(model, x0, path, model_grid(model, path))
}

/// [`simulate_system`] on a caller-provided grid built from `path`.
pub fn simulate_system_on(
    model: &ModelSpec,
    x0: &InitialState,
    path: &DrivingPath,
    grid: Arc<MergedGrid>,
) -> Result<Trajectory, SimError> {
    if x0.len() != model.n {
        return Err(SimError::Dimension {
            got: x0.len(),
            want: model.n,
        });
    }
    let species: Vec<usize> = (0..model.n).collect();
    log_euler(model, grid, path, &species, x0.values(), Competition::System)
}

/// Upper auxiliary process `Y_i`: species `i` without interspecific competition.
pub fn simulate_upper(
    model: &ModelSpec,
    i: usize,
    x0_i: f64,
    path: &DrivingPath,
) -> Result<Trajectory, SimError> {
    simulate_upper_on(model, i, x0_i, path, model_grid(model, path))
}

pub fn simulate_upper_on(
    model: &ModelSpec,
    i: usize,
    x0_i: f64,
    path: &DrivingPath,
    grid: Arc<MergedGrid>,
) -> Result<Trajectory, SimError> {
    check_species(model, i)?;
    check_x0(x0_i)?;
    log_euler(model, grid, path, &[i], &[x0_i], Competition::None)
}

/// Lower auxiliary process `Z_i`: growth rate reduced by the competition
/// the upper processes `Y_j` would exert.
pub fn simulate_lower(
    model: &ModelSpec,
    i: usize,
    x0_i: f64,
    path: &DrivingPath,
    upper: &[Trajectory],
) -> Result<Trajectory, SimError> {
    check_species(model, i)?;
    check_x0(x0_i)?;
    let grid = upper
        .first()
        .map(|u| Arc::clone(&u.grid))
        .ok_or_else(|| SimError::GridMismatch("no upper trajectories".into()))?;
    log_euler(model, grid, path, &[i], &[x0_i], Competition::Upper(upper))
}

/// The full system with both auxiliary bounds for every species.
#[derive(Debug, Clone)]
pub struct Sandwich {
    pub system: Trajectory,
    pub upper: Vec<Trajectory>,
    pub lower: Vec<Trajectory>,
}

impl Sandwich {
    /// `(max_slot (Z_i - X_i), max_slot (X_i - Y_i))` over all species; both
    /// are `<= 0` when the ordering holds everywhere.
    pub fn max_violations(&self) -> (f64, f64) {
        let mut below = f64::NEG_INFINITY;
        let mut above = f64::NEG_INFINITY;
        for i in 0..self.system.species_count() {
            let x = self.system.species(i);
            for (s, &xv) in x.iter().enumerate() {
                below = below.max(self.lower[i].values[0][s] - xv);
                above = above.max(xv - self.upper[i].values[0][s]);
            }
        }
        (below, above)
    }

    /// Number of slots at which `Z_i <= X_i <= Y_i` fails.
    pub fn violation_count(&self) -> usize {
        (0..self.system.species_count())
            .map(|i| {
                let x = self.system.species(i);
                x.iter()
                    .enumerate()
                    .filter(|&(s, &xv)| {
                        !(self.lower[i].values[0][s] <= xv && xv <= self.upper[i].values[0][s])
                    })
                    .count()
            })
            .sum()
    }
}

/// Integrate X, every `Y_i` and every `Z_i` on one grid.
pub fn simulate_sandwich(
    model: &ModelSpec,
    x0: &InitialState,
    path: &DrivingPath,
) -> Result<Sandwich, SimError> {
    let grid = model_grid(model, path);
    let system = simulate_system_on(model, x0, path, Arc::clone(&grid))?;
    let upper = (0..model.n)
        .map(|i| simulate_upper_on(model, i, x0.values()[i], path, Arc::clone(&grid)))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(u) = upper.iter().find(|u| u.is_diverged()) {
        return Err(SimError::GridMismatch(format!(
            "upper bound diverged at t = {}",
            u.diverged_at.unwrap_or(f64::NAN)
        )));
    }
    let lower = (0..model.n)
        .map(|i| simulate_lower(model, i, x0.values()[i], path, &upper))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Sandwich {
        system,
        upper,
        lower,
    })
}
