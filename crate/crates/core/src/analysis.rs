//! Monte Carlo estimators over independent driving paths.
//!
//! Replicate `j` always uses noise stream `j` of the master seed and
//! per-path results are reduced in path-index order, so every estimate is a
//! bit-exact function of its inputs regardless of thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closedform::{explicit_logistic_on, LogisticSolution};
use crate::conditions;
use crate::error::{AnalysisError, SimError};
use crate::integrate::{model_grid, simulate_system_on, Trajectory};
use crate::model::{InitialState, ModelSpec};
use crate::noise::{sample_path_stream, step_count, DrivingPath};

pub const DEFAULT_CHECKPOINTS: usize = 50;

/// Horizon, step, path count and seed of a Monte Carlo run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub horizon: f64,
    pub step: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub checkpoints: usize,
}

impl McConfig {
    pub fn new(horizon: f64, step: f64, n_paths: usize, seed: u64) -> Self {
        McConfig {
            horizon,
            step,
            n_paths,
            seed,
            checkpoints: DEFAULT_CHECKPOINTS,
        }
    }

    pub fn with_checkpoints(self, checkpoints: usize) -> Self {
        McConfig { checkpoints, ..self }
    }

    fn check(&self) -> Result<(), AnalysisError> {
        step_count(self.horizon, self.step)?;
        if self.n_paths == 0 {
            return Err(AnalysisError::Argument("n_paths must be >= 1".into()));
        }
        if self.checkpoints == 0 {
            return Err(AnalysisError::Argument("need at least one checkpoint".into()));
        }
        Ok(())
    }

    /// `k T / count` for `k = 1..=count`.
    pub fn checkpoint_times(&self) -> Vec<f64> {
        checkpoint_times(self.horizon, self.checkpoints)
    }
}

pub fn checkpoint_times(horizon: f64, count: usize) -> Vec<f64> {
    (1..=count)
        .map(|k| if k == count { horizon } else { horizon * k as f64 / count as f64 })
        .collect()
}

/// Monte Carlo time series of a functional of the solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCSeries {
    pub checkpoints: Vec<f64>,
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    pub n_paths: usize,
    pub diverged_count: usize,
}

impl MCSeries {
    /// Paths that contributed to the estimate.
    pub fn contributing(&self) -> usize {
        self.n_paths - self.diverged_count
    }

    /// Welford reduction in the given (path-index) order; `None` entries are
    /// diverged paths.
    pub fn from_paths(checkpoints: Vec<f64>, per_path: &[Option<Vec<f64>>]) -> Self {
        let m = checkpoints.len();
        let mut mean = vec![0.0; m];
        let mut m2 = vec![0.0; m];
        let mut count = 0usize;
        for values in per_path.iter().flatten() {
            count += 1;
            for (c, &x) in values.iter().enumerate() {
                let delta = x - mean[c];
                mean[c] += delta / count as f64;
                m2[c] += delta * (x - mean[c]);
            }
        }
        let std_error = m2
            .iter()
            .map(|&s| {
                if count > 1 {
                    (s / (count - 1) as f64 / count as f64).sqrt()
                } else {
                    0.0
                }
            })
            .collect();
        if count == 0 {
            mean.fill(f64::NAN);
        }
        MCSeries {
            checkpoints,
            mean,
            std_error,
            n_paths: per_path.len(),
            diverged_count: per_path.len() - count,
        }
    }

    pub fn last_mean(&self) -> f64 {
        *self.mean.last().expect("non-empty series")
    }

    pub fn last_std_error(&self) -> f64 {
        *self.std_error.last().expect("non-empty series")
    }

    /// Index of the checkpoint closest to `t`.
    pub fn index_of(&self, t: f64) -> usize {
        self.checkpoints
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map(|(k, _)| k)
            .expect("non-empty series")
    }
}

/// Scalar Monte Carlo estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub diverged_count: usize,
}

/// Evaluate `per_path` on every replicate in parallel, results in index order.
fn run_paths<T, F>(model: &ModelSpec, cfg: &McConfig, per_path: F) -> Result<Vec<T>, AnalysisError>
where
    T: Send,
    F: Fn(&DrivingPath) -> Result<T, SimError> + Sync,
{
    cfg.check()?;
    (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|j| {
            let path = sample_path_stream(&model.marks, cfg.horizon, cfg.step, cfg.seed, j)?;
            per_path(&path)
        })
        .collect::<Result<Vec<T>, SimError>>()
        .map_err(AnalysisError::from)
}

fn at_checkpoints(traj_slot: impl Fn(usize) -> f64, grid: &crate::noise::MergedGrid, times: &[f64]) -> Vec<f64> {
    times.iter().map(|&t| traj_slot(grid.slot_at(t))).collect()
}

/// `E |X(t)|^p` (Euclidean norm) at the checkpoints.
pub fn estimate_moment(
    model: &ModelSpec,
    x0: &InitialState,
    p: f64,
    cfg: &McConfig,
) -> Result<MCSeries, AnalysisError> {
    if !(p.is_finite() && p >= 0.0) {
        return Err(AnalysisError::Argument(format!("moment order {p} must be >= 0")));
    }
    let times = cfg.checkpoint_times();
    let per_path = run_paths(model, cfg, |path| {
        let traj = simulate_system_on(model, x0, path, model_grid(model, path))?;
        if traj.is_diverged() {
            return Ok(None);
        }
        Ok(Some(at_checkpoints(|s| traj.norm(s).powf(p), traj.grid(), &times)))
    })?;
    Ok(MCSeries::from_paths(times, &per_path))
}

/// `late max <= ratio * early max`, comparing checkpoints in `(T/2, T]`
/// against those in `(0, T/2]`.
pub fn is_window_bounded(series: &MCSeries, ratio: f64) -> bool {
    let half = series.checkpoints.last().copied().unwrap_or(0.0) / 2.0;
    let (mut early, mut late) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (t, m) in series.checkpoints.iter().zip(&series.mean) {
        if *t <= half {
            early = early.max(*m);
        } else {
            late = late.max(*m);
        }
    }
    late <= ratio * early
}

/// `(1/T) [ln|X(T)| + (min_i inf b_ii / sqrt n) int_0^T |X(s)| ds]`, trapezoid rule.
pub fn lyapunov_functional(traj: &Trajectory, model: &ModelSpec) -> f64 {
    let n = traj.species_count();
    let slots = traj.grid().slots();
    let len = traj.len();
    let b_min = (0..model.n)
        .map(|i| model.b[i][i].inf())
        .fold(f64::INFINITY, f64::min);
    let mut integral = 0.0;
    for s in 0..len - 1 {
        integral += 0.5 * (traj.norm(s) + traj.norm(s + 1)) * (slots[s + 1].time - slots[s].time);
    }
    let horizon = slots[len - 1].time;
    (traj.norm(len - 1).ln() + b_min / (n as f64).sqrt() * integral) / horizon
}

/// Upper bound of the functional: `max_i sup a_i`.
pub fn lyapunov_functional_bound(model: &ModelSpec) -> f64 {
    model.a.iter().map(|a| a.sup()).fold(f64::NEG_INFINITY, f64::max)
}

/// Monte Carlo mean of [`lyapunov_functional`] over independent paths.
pub fn estimate_lyapunov_functional(
    model: &ModelSpec,
    x0: &InitialState,
    cfg: &McConfig,
) -> Result<Estimate, AnalysisError> {
    let cfg1 = cfg.with_checkpoints(1);
    let per_path = run_paths(model, &cfg1, |path| {
        let traj = simulate_system_on(model, x0, path, model_grid(model, path))?;
        Ok((!traj.is_diverged()).then(|| vec![lyapunov_functional(&traj, model)]))
    })?;
    let s = MCSeries::from_paths(vec![cfg.horizon], &per_path);
    Ok(Estimate {
        mean: s.mean[0],
        std_error: s.std_error[0],
        n_paths: s.n_paths,
        diverged_count: s.diverged_count,
    })
}

/// Normalized log series of one species.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSeries {
    pub times: Vec<f64>,
    /// `ln X_i(t) / t`.
    pub per_time: Vec<f64>,
    /// `ln X_i(t) / ln t`, defined for `t > 1`.
    pub per_log_time: Vec<Option<f64>>,
}

/// `ln X_i(t) / t` and `ln X_i(t) / ln t` at the given times.
pub fn sample_lyapunov(traj: &Trajectory, i: usize, times: &[f64]) -> LyapunovSeries {
    let grid = traj.grid();
    let logs: Vec<f64> = times
        .iter()
        .map(|&t| traj.value(i, grid.slot_at(t)).ln())
        .collect();
    LyapunovSeries {
        times: times.to_vec(),
        per_time: logs.iter().zip(times).map(|(l, t)| l / t).collect(),
        per_log_time: logs
            .iter()
            .zip(times)
            .map(|(l, &t)| (t > 1.0).then(|| l / t.ln()))
            .collect(),
    }
}

/// Monte Carlo sample exponents of the upper process `Y_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    /// `E ln Y_i(t) / t`.
    pub per_time: MCSeries,
    /// `E ln Y_i(t) / ln t` over checkpoints with `t > 1`.
    pub per_log_time: MCSeries,
    /// `ln Y_i(T)` per contributing path, in path order.
    pub terminal_log: Vec<f64>,
}

impl LyapunovEstimate {
    /// Fraction of paths with `Y_i(T) < level`.
    pub fn fraction_below(&self, level: f64) -> f64 {
        let ln_level = level.ln();
        self.terminal_log.iter().filter(|&&l| l < ln_level).count() as f64
            / self.terminal_log.len() as f64
    }

    /// Fraction of paths with `ln Y_i(T) / ln T <= limit`.
    pub fn fraction_log_ratio_below(&self, horizon: f64, limit: f64) -> f64 {
        self.terminal_log
            .iter()
            .filter(|&&l| l / horizon.ln() <= limit)
            .count() as f64
            / self.terminal_log.len() as f64
    }
}

fn upper_solution(
    model: &ModelSpec,
    i: usize,
    x0_i: f64,
    path: &DrivingPath,
) -> Result<LogisticSolution, SimError> {
    explicit_logistic_on(model, i, x0_i, path, model_grid(model, path), None)
}

/// Sample exponents `ln Y_i(t)/t` and `ln Y_i(t)/ln t` of the upper process,
/// evaluated through its explicit solution.
pub fn estimate_lyapunov(
    model: &ModelSpec,
    i: usize,
    x0_i: f64,
    cfg: &McConfig,
) -> Result<LyapunovEstimate, AnalysisError> {
    if i >= model.n {
        return Err(SimError::Species(i).into());
    }
    let times = cfg.checkpoint_times();
    let log_times: Vec<f64> = times.iter().copied().filter(|&t| t > 1.0).collect();
    let per_path = run_paths(model, cfg, |path| {
        let sol = upper_solution(model, i, x0_i, path)?;
        let logs: Vec<f64> = times
            .iter()
            .map(|&t| sol.ln_value(sol.grid.slot_at(t)))
            .collect();
        Ok(logs)
    })?;
    let per_time: Vec<Option<Vec<f64>>> = per_path
        .iter()
        .map(|logs| Some(logs.iter().zip(&times).map(|(l, t)| l / t).collect()))
        .collect();
    let per_log: Vec<Option<Vec<f64>>> = per_path
        .iter()
        .map(|logs| {
            Some(
                logs.iter()
                    .zip(&times)
                    .filter(|(_, &t)| t > 1.0)
                    .map(|(l, t)| l / t.ln())
                    .collect(),
            )
        })
        .collect();
    Ok(LyapunovEstimate {
        per_time: MCSeries::from_paths(times, &per_time),
        per_log_time: MCSeries::from_paths(log_times, &per_log),
        terminal_log: per_path.iter().map(|l| *l.last().expect("checkpoints")).collect(),
    })
}

fn require_permanence(model: &ModelSpec, i: usize) -> Result<f64, AnalysisError> {
    if i >= model.n {
        return Err(SimError::Species(i).into());
    }
    let c1 = conditions::c1(model, i);
    if c1.value > 0.0 {
        Ok(c1.value)
    } else {
        Err(AnalysisError::Prerequisite(format!(
            "species {}: c1 = inf_t [a - sigma^2 - sum_k gamma^2/(1+gamma) lambda_k] = {} is not > 0, \
             so the inverse-moment bound does not apply",
            i + 1,
            c1.value
        )))
    }
}

/// `E[1/Y_i(t)]` against `sup b_ii / c1 + (1/x0 - sup b_ii / c1) e^{-c1 t}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverseMomentReport {
    pub series: MCSeries,
    pub bound: Vec<f64>,
    /// `mean - 3 se > bound` at the checkpoint.
    pub violation: Vec<bool>,
    pub c1: f64,
    pub b_sup: f64,
}

impl InverseMomentReport {
    pub fn passes(&self) -> bool {
        !self.violation.iter().any(|&v| v)
    }
}

pub fn inverse_moment_bound(c1: f64, b_sup: f64, x0: f64, t: f64) -> f64 {
    b_sup / c1 + (1.0 / x0 - b_sup / c1) * (-c1 * t).exp()
}

pub fn inverse_moment_check(
    model: &ModelSpec,
    i: usize,
    x0_i: f64,
    cfg: &McConfig,
) -> Result<InverseMomentReport, AnalysisError> {
    let c1 = require_permanence(model, i)?;
    let b_sup = model.b[i][i].sup();
    let times = cfg.checkpoint_times();
    let per_path = run_paths(model, cfg, |path| {
        let sol = upper_solution(model, i, x0_i, path)?;
        Ok(Some(at_checkpoints(|s| sol.inverse(s), &sol.grid, &times)))
    })?;
    let series = MCSeries::from_paths(times, &per_path);
    let bound: Vec<f64> = series
        .checkpoints
        .iter()
        .map(|&t| inverse_moment_bound(c1, b_sup, x0_i, t))
        .collect();
    let violation = series
        .mean
        .iter()
        .zip(&series.std_error)
        .zip(&bound)
        .map(|((m, se), b)| m - 3.0 * se > *b)
        .collect();
    Ok(InverseMomentReport {
        series,
        bound,
        violation,
        c1,
        b_sup,
    })
}

/// Two solutions from `x` and `y` driven by the same noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    /// `E |1/Y(t,x) - 1/Y(t,y)|`.
    pub inverse_gap: MCSeries,
    /// `E |Y(t,x) - Y(t,y)|^{1/2}`.
    pub sqrt_gap: MCSeries,
    /// `|1/x - 1/y| e^{-c1 t}`.
    pub envelope: Vec<f64>,
    /// Paths on which `1/Y(t,x) - 1/Y(t,y)` has the sign of `1/x - 1/y` at every slot.
    pub sign_consistent_paths: usize,
    pub c1: f64,
}

impl CouplingReport {
    /// Envelope plus three standard errors dominates the gap at every checkpoint.
    pub fn within_envelope(&self) -> bool {
        self.inverse_gap
            .mean
            .iter()
            .zip(&self.inverse_gap.std_error)
            .zip(&self.envelope)
            .all(|((m, se), e)| *m <= e + 3.0 * se)
    }

    pub fn sign_invariant(&self) -> bool {
        self.sign_consistent_paths == self.inverse_gap.n_paths
    }
}

pub fn coupling_contraction(
    model: &ModelSpec,
    i: usize,
    x: f64,
    y: f64,
    cfg: &McConfig,
) -> Result<CouplingReport, AnalysisError> {
    let c1 = require_permanence(model, i)?;
    let times = cfg.checkpoint_times();
    let initial_gap = 1.0 / x - 1.0 / y;
    let per_path = run_paths(model, cfg, |path| {
        let grid = model_grid(model, path);
        let sx = explicit_logistic_on(model, i, x, path, grid.clone(), None)?;
        let sy = explicit_logistic_on(model, i, y, path, grid, None)?;
        let consistent = (0..sx.len()).all(|s| {
            let d = sx.inverse_difference(&sy, s);
            if initial_gap == 0.0 {
                d == 0.0
            } else {
                d.signum() == initial_gap.signum() && d != 0.0
            }
        });
        let inv: Vec<f64> = times
            .iter()
            .map(|&t| {
                let s = sx.grid.slot_at(t);
                sx.inverse_difference(&sy, s).abs()
            })
            .collect();
        let sq: Vec<f64> = times
            .iter()
            .map(|&t| {
                let s = sx.grid.slot_at(t);
                (sx.value(s) - sy.value(s)).abs().sqrt()
            })
            .collect();
        Ok((inv, sq, consistent))
    })?;
    let inv: Vec<Option<Vec<f64>>> = per_path.iter().map(|p| Some(p.0.clone())).collect();
    let sq: Vec<Option<Vec<f64>>> = per_path.iter().map(|p| Some(p.1.clone())).collect();
    let envelope = times
        .iter()
        .map(|&t| initial_gap.abs() * (-c1 * t).exp())
        .collect();
    Ok(CouplingReport {
        inverse_gap: MCSeries::from_paths(times.clone(), &inv),
        sqrt_gap: MCSeries::from_paths(times, &sq),
        envelope,
        sign_consistent_paths: per_path.iter().filter(|p| p.2).count(),
        c1,
    })
}

/// Two-sample Kolmogorov distance `sup_v |F_a(v) - F_b(v)|`.
pub fn kolmogorov_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Dvoretzky-Kiefer-Wolfowitz half-width: `P(sup|F_n - F| > eps) <= alpha`.
pub fn dkw_epsilon(n: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub horizon: f64,
    pub distance: f64,
    /// Two-sample sampling floor `2 * eps_DKW(n, 0.01)`.
    pub dkw_floor: f64,
    pub n_paths: usize,
}

impl InvariantReport {
    pub fn passes(&self, slack: f64) -> bool {
        self.distance <= self.dkw_floor + slack
    }
}

/// Kolmogorov distance between the laws of `Y_i(T, x)` and `Y_i(T, y)`,
/// each from its own set of paths (`seed_x`, `seed_y`).
#[allow(clippy::too_many_arguments)]
pub fn invariant_distance(
    model: &ModelSpec,
    i: usize,
    x: f64,
    y: f64,
    horizon: f64,
    step: f64,
    n_paths: usize,
    seeds: (u64, u64),
) -> Result<InvariantReport, AnalysisError> {
    if !model.is_time_homogeneous() {
        return Err(AnalysisError::Prerequisite(
            "invariant-measure comparison needs time-independent coefficients".into(),
        ));
    }
    require_permanence(model, i)?;
    let terminal = |x0: f64, seed: u64| {
        let cfg = McConfig::new(horizon, step, n_paths, seed).with_checkpoints(1);
        run_paths(model, &cfg, |path| {
            let sol = upper_solution(model, i, x0, path)?;
            Ok(sol.value(sol.len() - 1))
        })
    };
    let a = terminal(x, seeds.0)?;
    let b = terminal(y, seeds.1)?;
    Ok(InvariantReport {
        horizon,
        distance: kolmogorov_distance(&a, &b),
        dkw_floor: 2.0 * dkw_epsilon(n_paths, 0.01),
        n_paths,
    })
}
