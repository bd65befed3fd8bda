//! Closed-form solutions along a driving path: the fundamental solution of a
//! scalar linear SDE with jumps, the variation-of-constants formula for the
//! inhomogeneous equation, and the explicit solution of the scalar
//! logistic equation with jumps,
//!
//! ```text
//! Y(t) = Phi(t) / (1 / Y(0) + int_0^t Phi(s) b(s) ds)
//! ```
//!
//! Deterministic time integrals of coefficients are exact; `dW` sums use
//! the path's increments; `ds` integrals of path-dependent integrands use
//! the trapezoid rule on the merged grid.

use std::sync::Arc;

use crate::error::SimError;
use crate::integrate::model_grid;
use crate::model::{Coeff, MarkSpace, ModelSpec};
use crate::noise::{DrivingPath, MergedGrid, SlotKind};

/// `dY = (F Y + f) dt + (G Y + g) dW + int (H Y + h) dN~`, with `H` and `h`
/// given per mark.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearJumpSDE {
    pub f_lin: Coeff,
    pub g_lin: Coeff,
    pub f_const: Coeff,
    pub g_const: Coeff,
    pub h_lin: Vec<Coeff>,
    pub h_const: Vec<Coeff>,
    pub marks: MarkSpace,
}

impl LinearJumpSDE {
    /// Homogeneous equation `dY = Y (F dt + G dW + int H dN~)`.
    pub fn homogeneous(f_lin: Coeff, g_lin: Coeff, h_lin: Vec<Coeff>, marks: MarkSpace) -> Self {
        let k = h_lin.len();
        LinearJumpSDE {
            f_lin,
            g_lin,
            f_const: Coeff::constant(0.0),
            g_const: Coeff::constant(0.0),
            h_lin,
            h_const: vec![Coeff::constant(0.0); k],
            marks,
        }
    }

    fn check(&self) -> Result<(), SimError> {
        let k = self.marks.len();
        if self.h_lin.len() != k || self.h_const.len() != k {
            return Err(SimError::Config(format!(
                "jump coefficients need one entry per mark ({k})"
            )));
        }
        if let Some(h) = self.h_lin.iter().find(|h| h.inf() <= -1.0) {
            return Err(SimError::Domain {
                value: h.inf(),
                time: f64::NAN,
            });
        }
        Ok(())
    }
}

/// Scalar values on a merged grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSeries {
    pub grid: Arc<MergedGrid>,
    pub values: Vec<f64>,
}

impl PathSeries {
    pub fn terminal(&self) -> f64 {
        *self.values.last().expect("non-empty series")
    }

    pub fn at(&self, t: f64) -> f64 {
        self.values[self.grid.slot_at(t)]
    }
}

/// `ln(e^a + e^b)` without overflow.
pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Deterministic drift of `ln Phi` over one grid interval.
enum LogDrift<'a> {
    /// Exact `int_s^t (F - G^2/2 - sum_k H_k lambda_k) dr`.
    Exact {
        f_lin: &'a Coeff,
        g_lin: &'a Coeff,
        h_lin: &'a [Coeff],
        marks: &'a MarkSpace,
    },
    /// `F` given pointwise on the grid (trapezoid), remainder exact.
    Override {
        growth: &'a [f64],
        g_lin: &'a Coeff,
        h_lin: &'a [Coeff],
        marks: &'a MarkSpace,
    },
}

impl LogDrift<'_> {
    fn over(&self, s_idx: usize, s: f64, t: f64) -> f64 {
        let correction = |g: &Coeff, h: &[Coeff], marks: &MarkSpace| {
            -0.5 * g.integral_sq(s, t) - marks.integrate(|k| h[k].integral(s, t))
        };
        match self {
            LogDrift::Exact {
                f_lin,
                g_lin,
                h_lin,
                marks,
            } => f_lin.integral(s, t) + correction(g_lin, h_lin, marks),
            LogDrift::Override {
                growth,
                g_lin,
                h_lin,
                marks,
            } => {
                0.5 * (growth[s_idx] + growth[s_idx + 1]) * (t - s)
                    + correction(g_lin, h_lin, marks)
            }
        }
    }
}

fn log_fundamental(
    grid: &MergedGrid,
    path: &DrivingPath,
    drift: &LogDrift<'_>,
    g_lin: &Coeff,
    h_lin: &[Coeff],
) -> Result<Vec<f64>, SimError> {
    let slots = grid.slots();
    let mut out = Vec::with_capacity(slots.len());
    let mut acc = 0.0;
    out.push(acc);
    for s in 0..slots.len() - 1 {
        let (left, next) = (&slots[s], &slots[s + 1]);
        if next.kind == SlotKind::Post {
            let jump = path.jumps[next.jump.expect("post slot carries its jump")];
            let hv = h_lin[jump.mark].eval(jump.time);
            if hv <= -1.0 {
                return Err(SimError::Domain {
                    value: hv,
                    time: jump.time,
                });
            }
            acc += hv.ln_1p();
        } else {
            acc += drift.over(s, left.time, next.time) + g_lin.eval(left.time) * next.dw;
        }
        if acc.is_nan() {
            return Err(SimError::NotANumber {
                what: "ln Phi",
                time: next.time,
            });
        }
        out.push(acc);
    }
    Ok(out)
}

/// `ln Phi` on `grid` for the homogeneous part of `sde`.
pub fn log_fundamental_solution(
    sde: &LinearJumpSDE,
    path: &DrivingPath,
    grid: &MergedGrid,
) -> Result<Vec<f64>, SimError> {
    sde.check()?;
    let drift = LogDrift::Exact {
        f_lin: &sde.f_lin,
        g_lin: &sde.g_lin,
        h_lin: &sde.h_lin,
        marks: &sde.marks,
    };
    log_fundamental(grid, path, &drift, &sde.g_lin, &sde.h_lin)
}

fn sde_grid(sde: &LinearJumpSDE, path: &DrivingPath) -> Arc<MergedGrid> {
    let mut breaks: Vec<f64> = [&sde.f_lin, &sde.g_lin, &sde.f_const, &sde.g_const]
        .into_iter()
        .chain(sde.h_lin.iter())
        .chain(sde.h_const.iter())
        .flat_map(|c| c.breakpoints().iter().copied())
        .collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    Arc::new(MergedGrid::build(path, &breaks))
}

/// Stochastic exponential `Phi` solving `dPhi = Phi (F dt + G dW + int H dN~)`,
/// `Phi(0) = 1`.
pub fn fundamental_solution(sde: &LinearJumpSDE, path: &DrivingPath) -> Result<PathSeries, SimError> {
    let grid = sde_grid(sde, path);
    let log_phi = log_fundamental_solution(sde, path, &grid)?;
    Ok(PathSeries {
        values: log_phi.into_iter().map(f64::exp).collect(),
        grid,
    })
}

/// Variation-of-constants solution of the inhomogeneous equation,
///
/// ```text
/// Y(t) = Phi(t) [ y0 + int_0^t Phi^-1(s-) ( (f - G g - sum_k H_k h_k lambda_k / (1 + H_k)) ds
///                                          + g dW + int h / (1 + H) dN~ ) ]
/// ```
pub fn voc_solve(sde: &LinearJumpSDE, y0: f64, path: &DrivingPath) -> Result<PathSeries, SimError> {
    let grid = sde_grid(sde, path);
    let log_phi = log_fundamental_solution(sde, path, &grid)?;
    let slots = grid.slots();
    let marks = &sde.marks;
    // dt-integrand after merging the compensator of the h/(1+H) jump term:
    // f - G g - sum_k h_k lambda_k
    let rate = |t: f64, left: bool| {
        let ev = |c: &Coeff| if left { c.eval_left(t) } else { c.eval(t) };
        ev(&sde.f_const) - ev(&sde.g_lin) * ev(&sde.g_const) - marks.integrate(|k| ev(&sde.h_const[k]))
    };
    let mut acc = y0;
    let mut values = Vec::with_capacity(slots.len());
    values.push(y0);
    for s in 0..slots.len() - 1 {
        let (left, next) = (&slots[s], &slots[s + 1]);
        let inv_left = (-log_phi[s]).exp();
        if next.kind == SlotKind::Post {
            let jump = path.jumps[next.jump.expect("post slot carries its jump")];
            let hl = sde.h_lin[jump.mark].eval(jump.time);
            let hc = sde.h_const[jump.mark].eval(jump.time);
            acc += inv_left * hc / (1.0 + hl);
        } else {
            let inv_right = (-log_phi[s + 1]).exp();
            let dt = next.time - left.time;
            acc += 0.5 * (inv_left * rate(left.time, false) + inv_right * rate(next.time, true)) * dt
                + inv_left * sde.g_const.eval(left.time) * next.dw;
        }
        values.push(log_phi[s + 1].exp() * acc);
    }
    Ok(PathSeries { grid, values })
}

/// Explicit logistic solution in log form: `Y = exp(ln_phi - ln_denom)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticSolution {
    pub grid: Arc<MergedGrid>,
    pub ln_phi: Vec<f64>,
    /// `ln(1 / Y(0) + int_0^t Phi(s) b(s) ds)`.
    pub ln_denom: Vec<f64>,
    /// `ln int_0^t Phi(s) b(s) ds` (`-inf` at `t = 0`).
    pub ln_integral: Vec<f64>,
}

impl LogisticSolution {
    pub fn len(&self) -> usize {
        self.ln_phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ln_phi.is_empty()
    }

    pub fn ln_value(&self, slot: usize) -> f64 {
        self.ln_phi[slot] - self.ln_denom[slot]
    }

    pub fn value(&self, slot: usize) -> f64 {
        self.ln_value(slot).exp()
    }

    /// `1 / Y` at `slot`.
    pub fn inverse(&self, slot: usize) -> f64 {
        (-self.ln_value(slot)).exp()
    }

    /// `1/Y_self - 1/Y_other` at `slot`. Solutions started from different
    /// values on one path share `Phi` and `int Phi b`, so the difference is
    /// `(1/x - 1/y) / Phi`; it is evaluated in that form because subtracting
    /// the inverses cancels once the integral dominates `1/x`.
    pub fn inverse_difference(&self, other: &LogisticSolution, slot: usize) -> f64 {
        if self.ln_phi[slot] == other.ln_phi[slot] && self.ln_integral[slot] == other.ln_integral[slot] {
            (self.ln_denom[0].exp() - other.ln_denom[0].exp()) * (-self.ln_phi[slot]).exp()
        } else {
            self.inverse(slot) - other.inverse(slot)
        }
    }

    pub fn series(&self) -> PathSeries {
        PathSeries {
            grid: Arc::clone(&self.grid),
            values: (0..self.len()).map(|s| self.value(s)).collect(),
        }
    }
}

/// The explicit solution for species `i` on a given grid, with an optional
/// pointwise replacement of the growth rate `a_i(t)`.
pub fn explicit_logistic_on(
    model: &ModelSpec,
    i: usize,
    x0_i: f64,
    path: &DrivingPath,
    grid: Arc<MergedGrid>,
    growth_override: Option<&PathSeries>,
) -> Result<LogisticSolution, SimError> {
    if i >= model.n {
        return Err(SimError::Species(i));
    }
    if !(x0_i.is_finite() && x0_i > 0.0) {
        return Err(SimError::Config(format!("initial value {x0_i} must be finite and > 0")));
    }
    let (g_lin, h_lin, b) = (&model.sigma[i], &model.gamma[i][..], &model.b[i][i]);
    let drift = match growth_override {
        Some(series) => {
            if series.values.len() != grid.len()
                || (!Arc::ptr_eq(&series.grid, &grid) && *series.grid != *grid)
            {
                return Err(SimError::GridMismatch(
                    "growth override must live on the solution grid".into(),
                ));
            }
            LogDrift::Override {
                growth: &series.values,
                g_lin,
                h_lin,
                marks: &model.marks,
            }
        }
        None => LogDrift::Exact {
            f_lin: &model.a[i],
            g_lin,
            h_lin,
            marks: &model.marks,
        },
    };
    let ln_phi = log_fundamental(&grid, path, &drift, g_lin, h_lin)?;

    let slots = grid.slots();
    let ln_inv_x0 = -x0_i.ln();
    let mut ln_integral = Vec::with_capacity(slots.len());
    let mut ln_denom = Vec::with_capacity(slots.len());
    let mut ln_int = f64::NEG_INFINITY;
    ln_integral.push(ln_int);
    ln_denom.push(ln_inv_x0);
    for s in 0..slots.len() - 1 {
        let (left, next) = (&slots[s], &slots[s + 1]);
        let dt = next.time - left.time;
        if dt > 0.0 {
            // trapezoid of Phi b, with b's left limit at the right end
            let lo = ln_phi[s] + b.eval(left.time).ln();
            let hi = ln_phi[s + 1] + b.eval_left(next.time).ln();
            ln_int = log_add_exp(ln_int, (0.5 * dt).ln() + log_add_exp(lo, hi));
        }
        ln_integral.push(ln_int);
        ln_denom.push(log_add_exp(ln_inv_x0, ln_int));
    }
    Ok(LogisticSolution {
        grid,
        ln_phi,
        ln_denom,
        ln_integral,
    })
}

/// Explicit solution for the upper auxiliary process of species `i` (or,
/// with a growth override, the lower one).
pub fn explicit_logistic(
    model: &ModelSpec,
    i: usize,
    x0_i: f64,
    path: &DrivingPath,
    growth_override: Option<&PathSeries>,
) -> Result<PathSeries, SimError> {
    let grid = match growth_override {
        Some(series) => Arc::clone(&series.grid),
        None => model_grid(model, path),
    };
    Ok(explicit_logistic_on(model, i, x0_i, path, grid, growth_override)?.series())
}

/// Effective growth rate `a_i(t) - sum_{j != i} b_ij(t) Y_j(t)` on the grid
/// of the given upper processes, for realizing the lower bound explicitly.
pub fn lower_growth_rate(model: &ModelSpec, i: usize, upper: &[PathSeries]) -> PathSeries {
    let grid = Arc::clone(&upper[i].grid);
    let values = grid
        .slots()
        .iter()
        .enumerate()
        .map(|(s, slot)| {
            model.a[i].eval(slot.time)
                - (0..model.n)
                    .filter(|&j| j != i)
                    .map(|j| model.b[i][j].eval(slot.time) * upper[j].values[s])
                    .sum::<f64>()
        })
        .collect();
    PathSeries { grid, values }
}

/// `1 / Y(t)` from the rearranged form
///
/// ```text
/// 1/Y(t) = (1/Y(0)) / Phi(t) + int_0^t b(s) Phi(s) / Phi(t) ds
/// ```
///
/// with the same trapezoid rule as [`explicit_logistic_on`].
pub fn inverse_by_rearrangement(
    model: &ModelSpec,
    i: usize,
    x0_i: f64,
    solution: &LogisticSolution,
) -> Vec<f64> {
    let slots = solution.grid.slots();
    let b = &model.b[i][i];
    let lp = &solution.ln_phi;
    (0..slots.len())
        .map(|t_idx| {
            let mut sum = (-lp[t_idx]).exp() / x0_i;
            for s in 0..t_idx {
                let dt = slots[s + 1].time - slots[s].time;
                if dt > 0.0 {
                    let lo = b.eval(slots[s].time) * (lp[s] - lp[t_idx]).exp();
                    let hi = b.eval_left(slots[s + 1].time) * (lp[s + 1] - lp[t_idx]).exp();
                    sum += 0.5 * dt * (lo + hi);
                }
            }
            sum
        })
        .collect()
}
