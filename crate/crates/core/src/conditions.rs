//! Analytic hypotheses of the permanence, zero-exponent and extinction
//! results, evaluated for a concrete model, and the regime classifier that
//! combines them.
//!
//! Infima and suprema over `t >= 0` of composite expressions are exact when
//! every coefficient involved is constant or piecewise constant, and when a
//! single sinusoid is involved and the extremum sits at its crest or trough.
//! Otherwise they are found by dense sampling, and the result carries the
//! sampling step and a tolerance estimate.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{Coeff, ModelSpec};

/// Fraction of the shortest period used as the dense-sampling step.
pub const SAMPLE_FRACTION: f64 = 1e-3;
const MAX_SAMPLES: usize = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    Inf,
    Sup,
}

impl Bound {
    fn better(self, a: f64, b: f64) -> bool {
        match self {
            Bound::Inf => a < b,
            Bound::Sup => a > b,
        }
    }
}

/// An infimum or supremum over `t >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub value: f64,
    /// `false` when found by dense sampling.
    pub exact: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_step: Option<f64>,
    /// Largest change of the expression between adjacent samples.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

impl Extremum {
    fn exact(value: f64) -> Self {
        Extremum {
            value,
            exact: true,
            sample_step: None,
            tolerance: None,
        }
    }
}

/// Extremum over `t >= 0` of `f`, an expression in the coefficients `deps`.
pub fn extremum<'a>(
    deps: impl IntoIterator<Item = &'a Coeff>,
    f: impl Fn(f64) -> f64,
    bound: Bound,
) -> Extremum {
    let varying: Vec<&Coeff> = deps.into_iter().filter(|c| !c.is_constant()).collect();
    if varying.is_empty() {
        return Extremum::exact(f(0.0));
    }
    let pick = |vals: &mut dyn Iterator<Item = f64>| {
        vals.fold(None, |acc: Option<f64>, v| match acc {
            Some(a) if !bound.better(v, a) => Some(a),
            _ => Some(v),
        })
        .expect("at least one sample")
    };

    let mut breaks: Vec<f64> = varying
        .iter()
        .flat_map(|c| c.breakpoints().iter().copied())
        .collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let periods: Vec<f64> = varying.iter().filter_map(|c| c.period()).collect();

    if periods.is_empty() {
        // piecewise constant: one evaluation per segment
        let value = pick(&mut std::iter::once(0.0).chain(breaks.iter().copied()).map(&f));
        return Extremum::exact(value);
    }

    let single_sin = match varying.as_slice() {
        [Coeff::Sin { omega, phase, .. }] => Some((*omega, *phase)),
        _ => None,
    };
    if let Some((omega, phase)) = single_sin {
        let period = periods[0];
        let t_of = |theta: f64| ((theta - phase) / omega).rem_euclid(period);
        let crest = [
            t_of(std::f64::consts::FRAC_PI_2),
            t_of(3.0 * std::f64::consts::FRAC_PI_2),
        ];
        let at_crest = pick(&mut crest.iter().map(|&t| f(t)));
        let step = SAMPLE_FRACTION * period;
        let n = (period / step).ceil() as usize;
        let (best_t, best, tol) = scan(&f, 0.0, step, n, bound);
        let slack = 1e-12 * at_crest.abs().max(1.0);
        if !bound.better(best, at_crest) || (best - at_crest).abs() <= slack {
            return Extremum::exact(at_crest);
        }
        let refined = refine(&f, best_t, step, bound).max_or_min(best, bound);
        return Extremum {
            value: refined,
            exact: false,
            sample_step: Some(step),
            tolerance: Some(tol),
        };
    }

    // general: dense scan over the breakpoint cycle plus ten of the longest
    // periods, then refine the best sample
    let max_period = periods.iter().copied().fold(0.0, f64::max);
    let min_period = periods.iter().copied().fold(f64::INFINITY, f64::min);
    let window = breaks.last().copied().unwrap_or(0.0) + 10.0 * max_period;
    let mut step = SAMPLE_FRACTION * min_period;
    if window / step > MAX_SAMPLES as f64 {
        step = window / MAX_SAMPLES as f64;
    }
    let n = (window / step).ceil() as usize;
    let (mut best_t, mut best, tol) = scan(&f, 0.0, step, n, bound);
    for &b in &breaks {
        let v = f(b);
        if bound.better(v, best) {
            best = v;
            best_t = b;
        }
    }
    let refined = refine(&f, best_t, step, bound).max_or_min(best, bound);
    Extremum {
        value: refined,
        exact: false,
        sample_step: Some(step),
        tolerance: Some(tol),
    }
}

trait Prefer {
    fn max_or_min(self, other: f64, bound: Bound) -> f64;
}

impl Prefer for f64 {
    fn max_or_min(self, other: f64, bound: Bound) -> f64 {
        if bound.better(self, other) {
            self
        } else {
            other
        }
    }
}

/// Best sample on `start + k * step`, `k = 0..=n`, and the largest jump
/// between adjacent samples.
fn scan(f: &impl Fn(f64) -> f64, start: f64, step: f64, n: usize, bound: Bound) -> (f64, f64, f64) {
    let mut best_t = start;
    let mut best = f(start);
    let mut prev = best;
    let mut tol: f64 = 0.0;
    for k in 1..=n {
        let t = start + k as f64 * step;
        let v = f(t);
        tol = tol.max((v - prev).abs());
        prev = v;
        if bound.better(v, best) {
            best = v;
            best_t = t;
        }
    }
    (best_t, best, tol)
}

/// Golden-section search on `[t - step, t + step]` clipped at 0.
fn refine(f: &impl Fn(f64) -> f64, t: f64, step: f64, bound: Bound) -> f64 {
    let sign = match bound {
        Bound::Inf => 1.0,
        Bound::Sup => -1.0,
    };
    let g = |x: f64| sign * f(x);
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = ((t - step).max(0.0), t + step);
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut g1, mut g2) = (g(x1), g(x2));
    for _ in 0..60 {
        if g1 < g2 {
            hi = x2;
            x2 = x1;
            g2 = g1;
            x1 = hi - ratio * (hi - lo);
            g1 = g(x1);
        } else {
            lo = x1;
            x1 = x2;
            g1 = g2;
            x2 = lo + ratio * (hi - lo);
            g2 = g(x2);
        }
    }
    sign * g1.min(g2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Regime {
    Extinct,
    Permanent,
    ZeroExponent,
    Unclassified,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Extinct => "EXTINCT",
            Regime::Permanent => "PERMANENT",
            Regime::ZeroExponent => "ZERO_EXPONENT",
            Regime::Unclassified => "UNCLASSIFIED",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegimeFlags {
    pub extinct: bool,
    pub zero_exponent: bool,
    pub permanent: bool,
}

impl RegimeFlags {
    /// Headline label: extinct, then permanent, then zero exponent.
    pub fn headline(self) -> Regime {
        if self.extinct {
            Regime::Extinct
        } else if self.permanent {
            Regime::Permanent
        } else if self.zero_exponent {
            Regime::ZeroExponent
        } else {
            Regime::Unclassified
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentBound {
    pub p: f64,
    pub bound: Extremum,
}

/// Condition values for one species.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeciesReport {
    /// 1-based species index.
    pub species: usize,
    /// `inf_{t,k} gamma_ik(t)`; absent without marks.
    pub delta: Option<f64>,
    /// `inf_t a_i - sigma_i^2 - sum_k gamma_ik^2 / (1 + gamma_ik) lambda_k`.
    pub c1: Extremum,
    /// `inf_t R_i(t)`, `R_i = a_i - sigma_i^2 / 2 + sum_k (ln(1 + gamma_ik) - gamma_ik) lambda_k`.
    pub r_inf: Extremum,
    /// `sup_t sum_k ln(1 + gamma_ik)^2 lambda_k`.
    pub eq113_bound: Extremum,
    /// `sup_t sum_k |gamma_ik|^p lambda_k` for each requested `p`.
    pub eq90_bounds: Vec<MomentBound>,
    /// `sup_t sum_k gamma_ik^2 lambda_k`.
    pub eq99_bound: Extremum,
    /// Long-run time average of `beta_i` (equal to `R_i` pointwise).
    pub eta: f64,
    pub beta_fn_description: String,
    /// `inf_t R_i(t) - sum_{j != i} R_ij R_j(t)`.
    pub eq116_margin: Extremum,
    pub flags: RegimeFlags,
    pub classification: Regime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    /// Combined label: extinct if any species is, otherwise the weakest
    /// guarantee shared by all species.
    pub classification: Regime,
    pub species: Vec<SpeciesReport>,
    /// `R_ij = sup_t b_ij / b_jj` for `i != j` (diagonal 0).
    pub r_matrix: Vec<Vec<Extremum>>,
}

impl RegimeReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn r_fn(model: &ModelSpec, i: usize, t: f64) -> f64 {
    let s = model.sigma[i].eval(t);
    model.a[i].eval(t) - 0.5 * s * s
        + model.marks.integrate(|k| {
            let g = model.gamma[i][k].eval(t);
            g.ln_1p() - g
        })
}

fn c1_fn(model: &ModelSpec, i: usize, t: f64) -> f64 {
    let s = model.sigma[i].eval(t);
    model.a[i].eval(t)
        - s * s
        - model.marks.integrate(|k| {
            let g = model.gamma[i][k].eval(t);
            g * g / (1.0 + g)
        })
}

fn species_deps(model: &ModelSpec, i: usize) -> Vec<&Coeff> {
    std::iter::once(&model.a[i])
        .chain(std::iter::once(&model.sigma[i]))
        .chain(model.gamma[i].iter())
        .collect()
}

fn jump_sup(model: &ModelSpec, i: usize, g: impl Fn(f64) -> f64) -> Extremum {
    extremum(
        model.gamma[i].iter(),
        |t| model.marks.integrate(|k| g(model.gamma[i][k].eval(t))),
        Bound::Sup,
    )
}

/// `inf_t R_i(t)`.
pub fn r_inf(model: &ModelSpec, i: usize) -> Extremum {
    extremum(species_deps(model, i), |t| r_fn(model, i, t), Bound::Inf)
}

/// `inf_t` of the permanence expression; positive means the inverse moment
/// of the upper process stays bounded.
pub fn c1(model: &ModelSpec, i: usize) -> Extremum {
    extremum(species_deps(model, i), |t| c1_fn(model, i, t), Bound::Inf)
}

/// Long-run average of `beta_i = a_i - sigma_i^2/2 - sum_k (gamma_ik - ln(1+gamma_ik)) lambda_k`.
pub fn eta(model: &ModelSpec, i: usize) -> f64 {
    model.a[i].long_run_average(|v| v) - 0.5 * model.sigma[i].long_run_average(|v| v * v)
        - model
            .marks
            .integrate(|k| model.gamma[i][k].long_run_average(|g| g - g.ln_1p()))
}

/// `K(p) = max_i sup_t sum_k |gamma_ik|^p lambda_k`.
pub fn check_moment_condition(model: &ModelSpec, p: f64) -> f64 {
    (0..model.n)
        .map(|i| jump_sup(model, i, |g| g.abs().powf(p)).value)
        .fold(0.0, f64::max)
}

/// `K = max_i sup_t sum_k gamma_ik^2 lambda_k`, so that the integrated
/// second jump moment grows at most like `K t`.
pub fn check_eq99(model: &ModelSpec) -> f64 {
    (0..model.n)
        .map(|i| jump_sup(model, i, |g| g * g).value)
        .fold(0.0, f64::max)
}

/// `c_2 = max_i sup_t sum_k ln(1 + gamma_ik)^2 lambda_k`.
pub fn check_eq113(model: &ModelSpec) -> f64 {
    (0..model.n)
        .map(|i| jump_sup(model, i, |g| g.ln_1p().powi(2)).value)
        .fold(0.0, f64::max)
}

/// `sup_t b_ij(t) / b_jj(t)`.
pub fn r_ratio(model: &ModelSpec, i: usize, j: usize) -> Extremum {
    if i == j {
        return Extremum::exact(0.0);
    }
    extremum(
        [&model.b[i][j], &model.b[j][j]],
        |t| model.b[i][j].eval(t) / model.b[j][j].eval(t),
        Bound::Sup,
    )
}

pub fn compute_regime_report(model: &ModelSpec, p_list: &[f64]) -> RegimeReport {
    let n = model.n;
    let r_matrix: Vec<Vec<Extremum>> = (0..n)
        .map(|i| (0..n).map(|j| r_ratio(model, i, j)).collect())
        .collect();

    let species: Vec<SpeciesReport> = (0..n)
        .map(|i| {
            let delta = model
                .gamma[i]
                .iter()
                .map(Coeff::inf)
                .reduce(f64::min);
            let c1 = c1(model, i);
            let r_inf = r_inf(model, i);
            let eq113_bound = jump_sup(model, i, |g| g.ln_1p().powi(2));
            let eq99_bound = jump_sup(model, i, |g| g * g);
            let eq90_bounds = p_list
                .iter()
                .map(|&p| MomentBound {
                    p,
                    bound: jump_sup(model, i, |g| g.abs().powf(p)),
                })
                .collect();
            let eta = eta(model, i);

            let mut deps = Vec::new();
            for j in 0..n {
                deps.extend(species_deps(model, j));
            }
            let margin = extremum(
                deps,
                |t| {
                    r_fn(model, i, t)
                        - (0..n)
                            .filter(|&j| j != i)
                            .map(|j| r_matrix[i][j].value * r_fn(model, j, t))
                            .sum::<f64>()
                },
                Bound::Inf,
            );

            let flags = RegimeFlags {
                extinct: eta < 0.0 && eq113_bound.value.is_finite(),
                zero_exponent: r_inf.value >= 0.0
                    && margin.value > 0.0
                    && eq113_bound.value.is_finite(),
                permanent: c1.value > 0.0,
            };
            SpeciesReport {
                species: i + 1,
                delta,
                c1,
                r_inf,
                eq113_bound,
                eq90_bounds,
                eq99_bound,
                eta,
                beta_fn_description: format!(
                    "beta_{0}(t) = a_{0}(t) - sigma_{0}(t)^2/2 - sum_k (gamma_{0}k(t) - ln(1 + gamma_{0}k(t))) lambda_k",
                    i + 1
                ),
                eq116_margin: margin,
                flags,
                classification: flags.headline(),
            }
        })
        .collect();

    let labels: Vec<Regime> = species.iter().map(|s| s.classification).collect();
    let classification = if labels.contains(&Regime::Extinct) {
        Regime::Extinct
    } else if labels.iter().all(|&l| l == Regime::Permanent) {
        Regime::Permanent
    } else if labels
        .iter()
        .all(|&l| matches!(l, Regime::Permanent | Regime::ZeroExponent))
    {
        Regime::ZeroExponent
    } else {
        Regime::Unclassified
    };
    RegimeReport {
        classification,
        species,
        r_matrix,
    }
}
