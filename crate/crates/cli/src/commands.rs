use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde_json::json;

use lvjump::analysis::{self, McConfig};
use lvjump::closedform::explicit_logistic_on;
use lvjump::conditions::{compute_regime_report, Regime};
use lvjump::integrate::{model_grid, simulate_lower, simulate_system_on, simulate_upper_on};
use lvjump::model::{validate_model, Coeff, MarkSpace};
use lvjump::noise::{sample_driving_path, write_path_dump};
use lvjump::{AnalysisError, InitialState, ModelSpec};

use crate::args::{AnalyzeArgs, AnalyzeKind, ClassifyArgs, Cli, Command, Common, SimulateArgs, SweepArgs};
use crate::exit;
use crate::output::{num, trajectory_csv, write_json, Csv};
use crate::Failure;

/// Slack added to the sampling floor in the invariant-law comparison.
const INVARIANT_SLACK: f64 = 0.02;
/// Late-window moments may exceed the early maximum by this factor.
const MOMENT_GROWTH: f64 = 1.2;

/// Execute a parsed command line; `Ok` carries the exit code.
pub fn run(cli: &Cli) -> Result<u8, Failure> {
    let c = &cli.common;
    let model = load_model(c)?;
    fs::create_dir_all(&c.out)?;
    match &cli.command {
        Command::Validate => validate(c, &model),
        Command::Simulate(a) => simulate(c, &require_valid(model)?, a),
        Command::Analyze(a) => analyze(c, &require_valid(model)?, a),
        Command::Classify(a) => classify(c, &require_valid(model)?, a),
        Command::Sweep(a) => sweep(c, &model, a),
    }
}

fn load_model(c: &Common) -> Result<ModelSpec, Failure> {
    let path = c
        .model
        .as_ref()
        .ok_or_else(|| Failure::bad_input("--model is required"))?;
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::bad_input(format!("{}: {e}", path.display())))?;
    ModelSpec::from_json(&text).map_err(|e| Failure::bad_input(format!("{}: {e}", path.display())))
}

fn require_valid(model: ModelSpec) -> Result<ModelSpec, Failure> {
    let report = validate_model(&model);
    if report.valid {
        return Ok(model);
    }
    let reasons: Vec<&str> = report.violations.iter().map(|v| v.message.as_str()).collect();
    Err(Failure::new(
        exit::VIOLATION,
        format!("model violates the positivity assumptions: {}", reasons.join("; ")),
    ))
}

fn out_file(c: &Common, name: &str) -> PathBuf {
    c.out.join(name)
}

fn validate(c: &Common, model: &ModelSpec) -> Result<u8, Failure> {
    let report = validate_model(model);
    write_json(&out_file(c, "validation.json"), &report)?;
    for v in &report.violations {
        eprintln!("{}", v.message);
    }
    Ok(if report.valid { exit::OK } else { exit::VIOLATION })
}

fn initial_state(model: &ModelSpec, x0: &[f64]) -> Result<InitialState, Failure> {
    let values = if x0.is_empty() { vec![1.0; model.n] } else { x0.to_vec() };
    if values.len() != model.n {
        return Err(Failure::bad_input(format!(
            "--x0 has {} values, model has {} species",
            values.len(),
            model.n
        )));
    }
    InitialState::new(values).map_err(|e| Failure::bad_input(e.to_string()))
}

fn simulate(c: &Common, model: &ModelSpec, a: &SimulateArgs) -> Result<u8, Failure> {
    let x0 = initial_state(model, &a.x0)?;
    if a.with_oracle && model.n != 1 {
        return Err(Failure::bad_input("--with-oracle needs a single-species model"));
    }
    let path = sample_driving_path(&model.marks, c.horizon, c.step, c.seed)
        .map_err(|e| Failure::bad_input(e.to_string()))?;
    if let Some(dump) = &a.dump_path {
        let file = fs::File::create(dump)?;
        write_path_dump(&path, model.marks.len(), std::io::BufWriter::new(file))?;
    }
    let sim = |e: lvjump::SimError| Failure::bad_input(e.to_string());
    let grid = model_grid(model, &path);
    let traj = simulate_system_on(model, &x0, &path, Arc::clone(&grid)).map_err(sim)?;
    let xs: Vec<&[f64]> = (0..model.n).map(|i| traj.species(i)).collect();
    trajectory_csv(&grid, "X", &xs, traj.diverged_at()).write(&out_file(c, "X.csv"))?;
    if let Some(t) = traj.diverged_at() {
        eprintln!("DIVERGED: |ln X| exceeded the float range at t = {t}");
        return Ok(exit::DIVERGED);
    }

    let mut code = exit::OK;
    if a.with_bounds {
        let upper = (0..model.n)
            .map(|i| simulate_upper_on(model, i, x0.values()[i], &path, Arc::clone(&grid)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(sim)?;
        let ys: Vec<&[f64]> = upper.iter().map(|u| u.species(0)).collect();
        let diverged = upper.iter().find_map(|u| u.diverged_at());
        trajectory_csv(&grid, "Y", &ys, diverged).write(&out_file(c, "Y.csv"))?;
        if let Some(t) = diverged {
            eprintln!("DIVERGED: upper bound left the float range at t = {t}");
            return Ok(exit::DIVERGED);
        }
        let lower = (0..model.n)
            .map(|i| simulate_lower(model, i, x0.values()[i], &path, &upper))
            .collect::<Result<Vec<_>, _>>()
            .map_err(sim)?;
        let zs: Vec<&[f64]> = lower.iter().map(|z| z.species(0)).collect();
        trajectory_csv(&grid, "Z", &zs, None).write(&out_file(c, "Z.csv"))?;

        let mut below = f64::NEG_INFINITY;
        let mut above = f64::NEG_INFINITY;
        let mut violations = 0usize;
        for i in 0..model.n {
            for s in 0..grid.len() {
                let (x, y, z) = (xs[i][s], ys[i][s], zs[i][s]);
                below = below.max(z - x);
                above = above.max(x - y);
                if !(z <= x && x <= y) {
                    violations += 1;
                }
            }
        }
        let summary = json!({
            "max_z_minus_x": below,
            "max_x_minus_y": above,
            "violations": violations,
            "slots": grid.len(),
        });
        write_json(&out_file(c, "sandwich.json"), &summary)?;
        println!("sandwich violations: {violations} (max Z-X {below:e}, max X-Y {above:e})");
        if violations > 0 {
            code = exit::VIOLATION;
        }
    }

    if a.with_oracle {
        let sol = explicit_logistic_on(model, 0, x0.values()[0], &path, Arc::clone(&grid), None)
            .map_err(sim)?;
        let explicit: Vec<f64> = (0..sol.len()).map(|s| sol.value(s)).collect();
        let gap = explicit
            .iter()
            .zip(xs[0])
            .map(|(e, x)| (x - e).abs() / e)
            .fold(0.0, f64::max);
        trajectory_csv(&grid, "explicit", &[&explicit], None).write(&out_file(c, "oracle.csv"))?;
        let pass = gap <= a.oracle_tol;
        write_json(
            &out_file(c, "oracle.json"),
            &json!({ "max_relative_gap": gap, "tolerance": a.oracle_tol, "pass": pass }),
        )?;
        println!("oracle max relative gap: {gap:e} (tolerance {:e})", a.oracle_tol);
        if !pass && code == exit::OK {
            code = exit::ORACLE_MISMATCH;
        }
    }
    Ok(code)
}

fn analysis_failure(
    c: &Common,
    model: &ModelSpec,
    i: usize,
    kind: AnalyzeKind,
    e: AnalysisError,
) -> Failure {
    match e {
        AnalysisError::Prerequisite(why) => {
            let report = compute_regime_report(model, &[]);
            let excerpt = &report.species[i];
            let verdict = json!({
                "analysis": kind.name(),
                "pass": false,
                "prerequisite": why,
                "regime": excerpt,
            });
            let _ = write_json(&out_file(c, &format!("{}_verdict.json", kind.name())), &verdict);
            let detail = serde_json::to_string_pretty(&json!({
                "species": excerpt.species,
                "classification": excerpt.classification,
                "c1": excerpt.c1,
                "eta": excerpt.eta,
                "flags": excerpt.flags,
            }))
            .expect("serializable");
            Failure::new(exit::PREREQUISITE, format!("{why}\n{detail}"))
        }
        other => Failure::bad_input(other.to_string()),
    }
}

fn series_csv(series: &analysis::MCSeries, bound: &[Option<f64>], flag: &[Option<bool>]) -> Csv {
    let header = ["checkpoint", "mean", "std_error", "bound", "flag"].map(String::from);
    let mut csv = Csv::new(&header);
    for k in 0..series.checkpoints.len() {
        csv.row(&[
            num(series.checkpoints[k]),
            num(series.mean[k]),
            num(series.std_error[k]),
            bound[k].map(num).unwrap_or_default(),
            flag[k].map(|f| u8::from(f).to_string()).unwrap_or_default(),
        ]);
    }
    csv
}

fn analyze(c: &Common, model: &ModelSpec, a: &AnalyzeArgs) -> Result<u8, Failure> {
    if a.species == 0 || a.species > model.n {
        return Err(Failure::bad_input(format!(
            "--species {} out of range 1..={}",
            a.species, model.n
        )));
    }
    let i = a.species - 1;
    let cfg = McConfig::new(c.horizon, c.step, c.paths, c.seed).with_checkpoints(a.checkpoints);
    let fail = |e| analysis_failure(c, model, i, a.which, e);
    let csv_path = out_file(c, &format!("{}.csv", a.which.name()));
    let verdict_path = out_file(c, &format!("{}_verdict.json", a.which.name()));

    let (verdict, pass) = match a.which {
        AnalyzeKind::Moments => {
            let x0 = initial_state(model, &a.x0)?;
            let s = analysis::estimate_moment(model, &x0, a.p, &cfg).map_err(fail)?;
            let half = c.horizon / 2.0;
            let early = s
                .checkpoints
                .iter()
                .zip(&s.mean)
                .filter(|(t, _)| **t <= half)
                .map(|(_, m)| *m)
                .fold(f64::NEG_INFINITY, f64::max);
            let bound: Vec<Option<f64>> = s
                .checkpoints
                .iter()
                .map(|&t| (t > half).then_some(MOMENT_GROWTH * early))
                .collect();
            let flag: Vec<Option<bool>> = s
                .mean
                .iter()
                .zip(&bound)
                .map(|(m, b)| Some(b.is_some_and(|b| *m > b)))
                .collect();
            series_csv(&s, &bound, &flag).write(&csv_path)?;
            let pass = analysis::is_window_bounded(&s, MOMENT_GROWTH);
            let verdict = json!({
                "analysis": "moments",
                "p": a.p,
                "verdict": if pass { "bounded" } else { "unbounded" },
                "early_max": early,
                "ratio": MOMENT_GROWTH,
                "n_paths": s.n_paths,
                "diverged_count": s.diverged_count,
                "pass": pass,
            });
            (verdict, pass)
        }
        AnalyzeKind::Lyapunov => {
            let x0 = initial_state(model, &a.x0)?;
            let est = analysis::estimate_lyapunov(model, i, x0.values()[i], &cfg).map_err(fail)?;
            let functional = analysis::estimate_lyapunov_functional(model, &x0, &cfg).map_err(fail)?;
            let report = compute_regime_report(model, &[]);
            let species = &report.species[i];
            let expected = match species.classification {
                Regime::Extinct => Some(species.eta),
                Regime::Permanent | Regime::ZeroExponent => Some(0.0),
                Regime::Unclassified => None,
            };
            let s = &est.per_time;
            let last = s.checkpoints.len() - 1;
            let (mean, se) = (s.mean[last], s.std_error[last]);
            let exponent_ok = expected.is_none_or(|e| (mean - e).abs() <= a.tol.max(3.0 * se));
            let bound: Vec<Option<f64>> = vec![expected; s.checkpoints.len()];
            let mut flag: Vec<Option<bool>> = vec![None; s.checkpoints.len()];
            flag[last] = Some(!exponent_ok);
            series_csv(s, &bound, &flag).write(&csv_path)?;
            let functional_bound = analysis::lyapunov_functional_bound(model);
            let functional_ok = functional.mean <= functional_bound + 3.0 * functional.std_error;
            let pass = exponent_ok && functional_ok;
            let verdict = json!({
                "analysis": "lyapunov",
                "species": a.species,
                "classification": species.classification,
                "eta": species.eta,
                "expected_exponent": expected,
                "mean_ln_over_t": mean,
                "std_error": se,
                "mean_ln_over_ln_t": est.per_log_time.mean.last(),
                "fraction_below_1e-6": est.fraction_below(1e-6),
                "functional": {
                    "mean": functional.mean,
                    "std_error": functional.std_error,
                    "bound": functional_bound,
                    "pass": functional_ok,
                },
                "pass": pass,
            });
            (verdict, pass)
        }
        AnalyzeKind::InverseMoment => {
            let x0 = initial_state(model, &a.x0)?;
            let r = analysis::inverse_moment_check(model, i, x0.values()[i], &cfg).map_err(fail)?;
            let bound: Vec<Option<f64>> = r.bound.iter().copied().map(Some).collect();
            let flag: Vec<Option<bool>> = r.violation.iter().copied().map(Some).collect();
            series_csv(&r.series, &bound, &flag).write(&csv_path)?;
            let pass = r.passes();
            let verdict = json!({
                "analysis": "inverse-moment",
                "species": a.species,
                "c1": r.c1,
                "b_sup": r.b_sup,
                "violations": r.violation.iter().filter(|&&v| v).count(),
                "pass": pass,
            });
            (verdict, pass)
        }
        AnalyzeKind::Couple => {
            let r = analysis::coupling_contraction(model, i, a.x, a.y, &cfg).map_err(fail)?;
            let g = &r.inverse_gap;
            let header = [
                "checkpoint",
                "mean",
                "std_error",
                "bound",
                "flag",
                "sqrt_gap_mean",
                "sqrt_gap_std_error",
            ]
            .map(String::from);
            let mut csv = Csv::new(&header);
            for k in 0..g.checkpoints.len() {
                let over = g.mean[k] > r.envelope[k] + 3.0 * g.std_error[k];
                csv.row(&[
                    num(g.checkpoints[k]),
                    num(g.mean[k]),
                    num(g.std_error[k]),
                    num(r.envelope[k]),
                    u8::from(over).to_string(),
                    num(r.sqrt_gap.mean[k]),
                    num(r.sqrt_gap.std_error[k]),
                ]);
            }
            csv.write(&csv_path)?;
            let pass = r.within_envelope() && r.sign_invariant();
            let verdict = json!({
                "analysis": "couple",
                "species": a.species,
                "x": a.x,
                "y": a.y,
                "c1": r.c1,
                "within_envelope": r.within_envelope(),
                "sign_consistent_paths": r.sign_consistent_paths,
                "n_paths": g.n_paths,
                "pass": pass,
            });
            (verdict, pass)
        }
        AnalyzeKind::Invariant => {
            let seeds = (c.seed, a.seed_y.unwrap_or(c.seed.wrapping_add(1)));
            let r = analysis::invariant_distance(model, i, a.x, a.y, c.horizon, c.step, c.paths, seeds)
                .map_err(fail)?;
            let limit = r.dkw_floor + INVARIANT_SLACK;
            let pass = r.passes(INVARIANT_SLACK);
            let mut csv = Csv::new(&["checkpoint", "mean", "std_error", "bound", "flag"].map(String::from));
            csv.row(&[
                num(r.horizon),
                num(r.distance),
                String::new(),
                num(limit),
                u8::from(!pass).to_string(),
            ]);
            csv.write(&csv_path)?;
            let verdict = json!({
                "analysis": "invariant",
                "species": a.species,
                "x": a.x,
                "y": a.y,
                "seeds": [seeds.0, seeds.1],
                "kolmogorov_distance": r.distance,
                "dkw_floor": r.dkw_floor,
                "limit": limit,
                "n_paths": r.n_paths,
                "pass": pass,
            });
            (verdict, pass)
        }
    };
    write_json(&verdict_path, &verdict)?;
    println!("{}: {}", a.which.name(), if pass { "pass" } else { "fail" });
    Ok(if pass { exit::OK } else { exit::VIOLATION })
}

fn classify(c: &Common, model: &ModelSpec, a: &ClassifyArgs) -> Result<u8, Failure> {
    if a.p.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
        return Err(Failure::bad_input("moment orders must be finite and > 0"));
    }
    let report = compute_regime_report(model, &a.p);
    write_json(&out_file(c, "regime.json"), &report)?;
    println!("{}", report.classification);
    Ok(exit::OK)
}

/// Target of a sweep, 0-based.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Param {
    A(usize),
    Sigma(usize),
    B(usize, usize),
    Gamma(usize, usize),
    Lambda(usize),
}

fn parse_param(text: &str, model: &ModelSpec) -> Result<Param, Failure> {
    let bad = || {
        Failure::bad_input(format!(
            "unknown parameter {text:?}; use a.I, sigma.I, B.I.J, gamma.I.K or lambda.K"
        ))
    };
    let mut parts = text.split('.');
    let name = parts.next().ok_or_else(bad)?;
    let idx: Vec<usize> = parts
        .map(|p| p.parse::<usize>().ok().filter(|&v| v >= 1).map(|v| v - 1))
        .collect::<Option<_>>()
        .ok_or_else(bad)?;
    let (n, k) = (model.n, model.marks.len());
    let param = match (name, idx.as_slice()) {
        ("a", &[i]) if i < n => Param::A(i),
        ("sigma", &[i]) if i < n => Param::Sigma(i),
        ("B" | "b", &[i, j]) if i < n && j < n => Param::B(i, j),
        ("gamma", &[i, m]) if i < n && m < k => Param::Gamma(i, m),
        ("lambda", &[m]) if m < k => Param::Lambda(m),
        _ => return Err(bad()),
    };
    Ok(param)
}

fn apply(model: &ModelSpec, param: Param, v: f64) -> Result<ModelSpec, String> {
    let mut m = model.clone();
    match param {
        Param::A(i) => m.a[i] = Coeff::constant(v),
        Param::Sigma(i) => m.sigma[i] = Coeff::constant(v),
        Param::B(i, j) => m.b[i][j] = Coeff::constant(v),
        Param::Gamma(i, k) => m.gamma[i][k] = Coeff::constant(v),
        Param::Lambda(k) => {
            let mut w = m.marks.weights.clone();
            w[k] = v;
            m.marks = MarkSpace::new(w).map_err(|e| e.to_string())?;
        }
    }
    m.check().map_err(|e| e.to_string())?;
    Ok(m)
}

fn sweep_grid(a: &SweepArgs) -> Result<Vec<f64>, Failure> {
    let values = match &a.range {
        Some(r) => {
            let parts: Vec<f64> = r
                .split(':')
                .map(|p| p.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| Failure::bad_input(format!("--range {r:?}: {e}")))?;
            let &[start, stop, step] = parts.as_slice() else {
                return Err(Failure::bad_input("--range must be start:stop:step"));
            };
            if !(start.is_finite() && stop.is_finite() && step.is_finite() && step > 0.0) {
                return Err(Failure::bad_input("--range needs finite bounds and a positive step"));
            }
            let count = ((stop - start) / step + 1e-9).floor();
            if count < 0.0 {
                Vec::new()
            } else {
                (0..=count as usize).map(|k| start + k as f64 * step).collect()
            }
        }
        None => a.values.clone(),
    };
    if values.is_empty() {
        return Err(Failure::bad_input("sweep grid is empty"));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Failure::bad_input(format!("non-finite sweep value {v}")));
    }
    Ok(values)
}

fn sweep(c: &Common, model: &ModelSpec, a: &SweepArgs) -> Result<u8, Failure> {
    let param = parse_param(&a.param, model)?;
    let values = sweep_grid(a)?;
    let n = model.n;
    let rows: Vec<Vec<String>> = values
        .par_iter()
        .map(|&v| {
            let mut row = vec![num(v)];
            let report = apply(model, param, v)
                .ok()
                .filter(|m| validate_model(m).valid)
                .map(|m| compute_regime_report(&m, &[]));
            match report {
                Some(r) => {
                    row.push(r.classification.to_string());
                    row.extend(r.species.iter().map(|s| num(s.eta)));
                    row.extend(r.species.iter().map(|s| num(s.c1.value)));
                    row.extend(r.species.iter().map(|s| num(s.r_inf.value)));
                }
                None => {
                    row.push("INVALID".to_string());
                    row.extend(std::iter::repeat_n(String::new(), 3 * n));
                }
            }
            row
        })
        .collect();
    let mut header = vec![a.param.clone(), "classification".to_string()];
    for name in ["eta", "c1", "r_inf"] {
        header.extend((1..=n).map(|i| format!("{name}_{i}")));
    }
    let mut csv = Csv::new(&header);
    for row in &rows {
        csv.row(row);
    }
    csv.write(&sweep_path(&c.out))?;
    println!("{} sweep points", rows.len());
    Ok(exit::OK)
}

fn sweep_path(out: &Path) -> PathBuf {
    out.join("sweep.csv")
}
