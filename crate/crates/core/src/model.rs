//! Model parameterization: bounded time-dependent coefficients, the finite
//! mark space of the jump measure, and the n-species competitive system.
//!
//! Coefficients live in a closed algebra (constant, sinusoid, piecewise
//! constant) so that infima, suprema and time integrals are available in
//! closed form.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// A bounded coefficient function of time, `t >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum Coeff {
    #[serde(rename = "const")]
    Const { c: f64 },
    /// `base + amp * sin(omega * t + phase)`.
    #[serde(rename = "sin")]
    Sin {
        base: f64,
        amp: f64,
        omega: f64,
        phase: f64,
    },
    /// `values[k]` on `[breaks[k-1], breaks[k])`, with `breaks[-1] = 0` and the
    /// last value holding on `[breaks[last], inf)`.
    #[serde(rename = "pwc")]
    Pwc { breaks: Vec<f64>, values: Vec<f64> },
}

impl Coeff {
    pub fn constant(c: f64) -> Self {
        Coeff::Const { c }
    }

    pub fn sin(base: f64, amp: f64, omega: f64, phase: f64) -> Self {
        Coeff::Sin {
            base,
            amp,
            omega,
            phase,
        }
    }

    pub fn pwc(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self, ModelError> {
        let c = Coeff::Pwc { breaks, values };
        c.check("coefficient")?;
        Ok(c)
    }

    /// Structural checks: finite parameters, strictly increasing positive
    /// breakpoints and one more value than breakpoints.
    pub fn check(&self, name: &str) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::Coefficient(name.to_string(), msg));
        match self {
            Coeff::Const { c } => {
                if !c.is_finite() {
                    return bad(format!("non-finite constant {c}"));
                }
            }
            Coeff::Sin {
                base,
                amp,
                omega,
                phase,
            } => {
                if ![*base, *amp, *omega, *phase].iter().all(|v| v.is_finite()) {
                    return bad("non-finite sinusoid parameter".into());
                }
            }
            Coeff::Pwc { breaks, values } => {
                if values.len() != breaks.len() + 1 {
                    return bad(format!(
                        "{} breakpoints need {} values, got {}",
                        breaks.len(),
                        breaks.len() + 1,
                        values.len()
                    ));
                }
                if !breaks.iter().chain(values).all(|v| v.is_finite()) {
                    return bad("non-finite piecewise value".into());
                }
                if breaks.first().is_some_and(|&b| b <= 0.0) {
                    return bad("breakpoints must be > 0".into());
                }
                if breaks.windows(2).any(|w| w[1] <= w[0]) {
                    return bad("breakpoints must be strictly increasing".into());
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Coeff::Const { c } => *c,
            Coeff::Sin {
                base,
                amp,
                omega,
                phase,
            } => base + amp * (omega * t + phase).sin(),
            Coeff::Pwc { breaks, values } => values[breaks.partition_point(|&b| b <= t)],
        }
    }

    /// Left limit `f(t-)`; differs from [`Coeff::eval`] only at breakpoints.
    pub fn eval_left(&self, t: f64) -> f64 {
        match self {
            Coeff::Pwc { breaks, values } => values[breaks.partition_point(|&b| b < t)],
            _ => self.eval(t),
        }
    }

    /// True when the function takes a single value on `[0, inf)`.
    pub fn is_constant(&self) -> bool {
        match self {
            Coeff::Const { .. } => true,
            Coeff::Sin { amp, omega, .. } => *amp == 0.0 || *omega == 0.0,
            Coeff::Pwc { values, .. } => values.iter().all(|&v| v == values[0]),
        }
    }

    /// Exact infimum over `[0, inf)`.
    pub fn inf(&self) -> f64 {
        match self {
            Coeff::Sin { .. } if self.is_constant() => self.eval(0.0),
            Coeff::Const { c } => *c,
            Coeff::Sin { base, amp, .. } => base - amp.abs(),
            Coeff::Pwc { values, .. } => values.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    /// Exact supremum over `[0, inf)`.
    pub fn sup(&self) -> f64 {
        match self {
            Coeff::Sin { .. } if self.is_constant() => self.eval(0.0),
            Coeff::Const { c } => *c,
            Coeff::Sin { base, amp, .. } => base + amp.abs(),
            Coeff::Pwc { values, .. } => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// `int_s^t f(r) dr` in closed form.
    pub fn integral(&self, s: f64, t: f64) -> f64 {
        match self {
            Coeff::Const { c } => c * (t - s),
            Coeff::Sin {
                base,
                amp,
                omega,
                phase,
            } => {
                if *omega == 0.0 {
                    (base + amp * phase.sin()) * (t - s)
                } else {
                    base * (t - s)
                        - amp / omega * ((omega * t + phase).cos() - (omega * s + phase).cos())
                }
            }
            Coeff::Pwc { .. } => self.piecewise_integral(s, t, |v| v),
        }
    }

    /// `int_s^t f(r)^2 dr` in closed form.
    pub fn integral_sq(&self, s: f64, t: f64) -> f64 {
        match self {
            Coeff::Const { c } => c * c * (t - s),
            Coeff::Sin {
                base,
                amp,
                omega,
                phase,
            } => {
                if *omega == 0.0 {
                    let v = base + amp * phase.sin();
                    v * v * (t - s)
                } else {
                    // (b + A sin x)^2 = b^2 + A^2/2 + 2bA sin x - (A^2/2) cos 2x
                    let (b, a, w, p) = (*base, *amp, *omega, *phase);
                    let lin = (b * b + 0.5 * a * a) * (t - s);
                    let sin_part = -2.0 * b * a / w * ((w * t + p).cos() - (w * s + p).cos());
                    let cos2_part = -(a * a) / (4.0 * w)
                        * ((2.0 * (w * t + p)).sin() - (2.0 * (w * s + p)).sin());
                    lin + sin_part + cos2_part
                }
            }
            Coeff::Pwc { .. } => self.piecewise_integral(s, t, |v| v * v),
        }
    }

    fn piecewise_integral(&self, s: f64, t: f64, g: impl Fn(f64) -> f64) -> f64 {
        let Coeff::Pwc { breaks, values } = self else {
            unreachable!()
        };
        if t <= s {
            return if t == s { 0.0 } else { -self.piecewise_integral(t, s, g) };
        }
        let mut total = 0.0;
        let mut lo = s;
        let mut k = breaks.partition_point(|&b| b <= s);
        while lo < t {
            let hi = breaks.get(k).copied().unwrap_or(f64::INFINITY).min(t);
            total += g(values[k]) * (hi - lo);
            lo = hi;
            k += 1;
        }
        total
    }

    /// `lim (1/t) int_0^t g(f(r)) dr`, the long-run average of `g` applied to
    /// this coefficient. Sinusoids are averaged over one period with the
    /// periodic trapezoid rule, which converges spectrally for smooth `g`.
    pub fn long_run_average(&self, g: impl Fn(f64) -> f64) -> f64 {
        match self {
            Coeff::Const { c } => g(*c),
            Coeff::Sin { .. } if self.is_constant() => g(self.eval(0.0)),
            Coeff::Sin { base, amp, .. } => {
                const NODES: usize = 4096;
                let sum: f64 = (0..NODES)
                    .map(|k| g(base + amp * (2.0 * PI * k as f64 / NODES as f64).sin()))
                    .sum();
                sum / NODES as f64
            }
            Coeff::Pwc { values, .. } => g(*values.last().expect("pwc has values")),
        }
    }

    /// Period of a non-degenerate sinusoid.
    pub fn period(&self) -> Option<f64> {
        match self {
            Coeff::Sin { omega, .. } if !self.is_constant() => Some(2.0 * PI / omega.abs()),
            _ => None,
        }
    }

    /// Breakpoints of a piecewise-constant coefficient (empty otherwise).
    pub fn breakpoints(&self) -> &[f64] {
        match self {
            Coeff::Pwc { breaks, .. } => breaks,
            _ => &[],
        }
    }
}

impl fmt::Display for Coeff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coeff::Const { c } => write!(f, "Const({c})"),
            Coeff::Sin {
                base,
                amp,
                omega,
                phase,
            } => write!(f, "Sinusoid({base}, {amp}, {omega}, {phase})"),
            Coeff::Pwc { breaks, values } => write!(f, "PiecewiseConst({breaks:?}, {values:?})"),
        }
    }
}

/// Finite mark space with jump intensity `weights[k]` per unit time for mark `k`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkSpace {
    pub weights: Vec<f64>,
}

impl MarkSpace {
    pub fn new(weights: Vec<f64>) -> Result<Self, ModelError> {
        let m = MarkSpace { weights };
        m.check()?;
        Ok(m)
    }

    pub fn empty() -> Self {
        MarkSpace::default()
    }

    fn check(&self) -> Result<(), ModelError> {
        if let Some(w) = self.weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(ModelError::Marks(format!("weight {w} is not finite and > 0")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Total jump rate `lambda(Y)`.
    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `int_Y f(u) lambda(du)` as the exact finite sum.
    pub fn integrate(&self, f: impl Fn(usize) -> f64) -> f64 {
        self.weights.iter().enumerate().map(|(k, w)| f(k) * w).sum()
    }
}

/// Full parameterization of the n-species competitive system with jumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub n: usize,
    pub a: Vec<Coeff>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<Coeff>>,
    pub sigma: Vec<Coeff>,
    pub marks: MarkSpace,
    pub gamma: Vec<Vec<Coeff>>,
}

impl ModelSpec {
    pub fn new(
        a: Vec<Coeff>,
        b: Vec<Vec<Coeff>>,
        sigma: Vec<Coeff>,
        marks: MarkSpace,
        gamma: Vec<Vec<Coeff>>,
    ) -> Result<Self, ModelError> {
        let m = ModelSpec {
            n: a.len(),
            a,
            b,
            sigma,
            marks,
            gamma,
        };
        m.check()?;
        Ok(m)
    }

    /// Single-species model with constant coefficients and one mark
    /// (no marks when `lambda == 0`).
    pub fn logistic(a: f64, b: f64, sigma: f64, gamma: f64, lambda: f64) -> Self {
        let (marks, gamma) = if lambda > 0.0 {
            (MarkSpace { weights: vec![lambda] }, vec![vec![Coeff::constant(gamma)]])
        } else {
            (MarkSpace::empty(), vec![vec![]])
        };
        ModelSpec::new(
            vec![Coeff::constant(a)],
            vec![vec![Coeff::constant(b)]],
            vec![Coeff::constant(sigma)],
            marks,
            gamma,
        )
        .expect("finite constants form a well-shaped model")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let m: ModelSpec = serde_json::from_str(text)?;
        m.check()?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    /// Shape and finiteness checks. Assumption-level bounds are reported by
    /// [`validate_model`] instead.
    pub fn check(&self) -> Result<(), ModelError> {
        let n = self.n;
        if n == 0 {
            return Err(ModelError::Shape("n must be >= 1".into()));
        }
        let k = self.marks.len();
        if self.a.len() != n || self.sigma.len() != n {
            return Err(ModelError::Shape(format!(
                "a and sigma need {n} entries, got {} and {}",
                self.a.len(),
                self.sigma.len()
            )));
        }
        if self.b.len() != n || self.b.iter().any(|row| row.len() != n) {
            return Err(ModelError::Shape(format!("B must be {n}x{n}")));
        }
        if self.gamma.len() != n || self.gamma.iter().any(|row| row.len() != k) {
            return Err(ModelError::Shape(format!("gamma must be {n}x{k} (species x marks)")));
        }
        self.marks.check()?;
        for (i, c) in self.a.iter().enumerate() {
            c.check(&format!("a_{}", i + 1))?;
        }
        for (i, c) in self.sigma.iter().enumerate() {
            c.check(&format!("sigma_{}", i + 1))?;
        }
        for (i, row) in self.b.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                c.check(&format!("b_{}{}", i + 1, j + 1))?;
            }
        }
        for (i, row) in self.gamma.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                c.check(&format!("gamma_{}{}", i + 1, j + 1))?;
            }
        }
        Ok(())
    }

    /// All coefficient functions of the model.
    pub fn coefficients(&self) -> impl Iterator<Item = &Coeff> {
        self.a
            .iter()
            .chain(self.sigma.iter())
            .chain(self.b.iter().flatten())
            .chain(self.gamma.iter().flatten())
    }

    /// Sorted union of all piecewise-constant breakpoints.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .coefficients()
            .flat_map(|c| c.breakpoints().iter().copied())
            .collect();
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    pub fn is_time_homogeneous(&self) -> bool {
        self.coefficients().all(Coeff::is_constant)
    }

    /// Jump compensator rate `sum_k gamma_ik(t) lambda_k`.
    pub fn compensator(&self, i: usize, t: f64) -> f64 {
        self.marks.integrate(|k| self.gamma[i][k].eval(t))
    }

    /// Project species `i` to a one-species model with the same noise.
    pub fn species(&self, i: usize) -> ModelSpec {
        ModelSpec {
            n: 1,
            a: vec![self.a[i].clone()],
            b: vec![vec![self.b[i][i].clone()]],
            sigma: vec![self.sigma[i].clone()],
            marks: self.marks.clone(),
            gamma: vec![self.gamma[i].clone()],
        }
    }
}

/// Strictly positive initial population sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialState(Vec<f64>);

impl InitialState {
    pub fn new(x0: Vec<f64>) -> Result<Self, ModelError> {
        if x0.is_empty() {
            return Err(ModelError::InitialState("empty initial state".into()));
        }
        if let Some(v) = x0.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(ModelError::InitialState(format!(
                "component {v} is not finite and > 0"
            )));
        }
        Ok(InitialState(x0))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// One failed bound of the positivity/boundedness assumption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub coefficient: String,
    pub bound: String,
    pub attained: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `inf a_i > 0`, `inf b_ii > 0`, `inf b_ij >= 0` and
/// `inf gamma_ik > -1` using exact infima.
pub fn validate_model(model: &ModelSpec) -> ValidationReport {
    let mut violations = Vec::new();
    let mut push = |name: String, bound: &str, attained: f64, ok: bool| {
        if !ok {
            violations.push(Violation {
                message: format!("inf {name} = {attained} not {bound}"),
                coefficient: name,
                bound: bound.to_string(),
                attained,
            });
        }
    };
    for i in 0..model.n {
        let v = model.a[i].inf();
        push(format!("a_{}", i + 1), "> 0", v, v > 0.0);
        for j in 0..model.n {
            let v = model.b[i][j].inf();
            if i == j {
                push(format!("b_{}{}", i + 1, j + 1), "> 0", v, v > 0.0);
            } else {
                push(format!("b_{}{}", i + 1, j + 1), ">= 0", v, v >= 0.0);
            }
        }
        for k in 0..model.marks.len() {
            let v = model.gamma[i][k].inf();
            push(format!("gamma_{}{}", i + 1, k + 1), "> -1", v, v > -1.0);
        }
    }
    ValidationReport {
        valid: violations.is_empty(),
        violations,
    }
}

pub fn coeff_inf(f: &Coeff) -> f64 {
    f.inf()
}

pub fn coeff_sup(f: &Coeff) -> f64 {
    f.sup()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn inf_sup_per_variant() {
        let c = Coeff::constant(3.0);
        assert_eq!((c.inf(), c.sup()), (3.0, 3.0));
        let s = Coeff::sin(2.0, 1.0, 5.0, 0.3);
        assert_eq!((s.inf(), s.sup()), (1.0, 3.0));
        let p = Coeff::pwc(vec![1.0, 2.0], vec![4.0, 1.0, 7.0]).unwrap();
        assert_eq!((p.inf(), p.sup()), (1.0, 7.0));
        assert_eq!(p.eval(0.5), 4.0);
        assert_eq!(p.eval(1.0), 1.0);
        assert_eq!(p.eval(100.0), 7.0);
    }

    #[test]
    fn valid_benchmark_and_boundary_gamma() {
        let m = ModelSpec::logistic(1.0, 1.0, 0.5, -0.5, 1.0);
        assert!(validate_model(&m).is_valid());

        let m = ModelSpec::logistic(1.0, 1.0, 0.5, -1.0, 1.0);
        let r = validate_model(&m);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].coefficient, "gamma_11");
        assert_eq!(r.violations[0].attained, -1.0);
        assert_eq!(r.violations[0].message, "inf gamma_11 = -1 not > -1");
    }

    #[test]
    fn sinusoidal_self_interaction_touching_zero() {
        let mut m = ModelSpec::logistic(1.0, 1.0, 0.5, -0.5, 1.0);
        m.b[0][0] = Coeff::sin(0.5, 0.5, 1.0, 0.0);
        let r = validate_model(&m);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].coefficient, "b_11");
        assert_eq!(r.violations[0].attained, 0.0);
    }

    #[test]
    fn closed_form_integrals_match_quadrature() {
        let cs = [
            Coeff::constant(1.5),
            Coeff::sin(0.7, 0.4, 2.3, 0.9),
            Coeff::pwc(vec![0.5, 1.7, 2.2], vec![1.0, -2.0, 0.25, 3.0]).unwrap(),
        ];
        for c in &cs {
            let (s, t) = (0.3, 2.9);
            let n = 200_000;
            let dx = (t - s) / n as f64;
            let mid = |g: &dyn Fn(f64) -> f64| -> f64 {
                (0..n).map(|k| g(s + (k as f64 + 0.5) * dx)).sum::<f64>() * dx
            };
            let i1 = mid(&|r| c.eval(r));
            let i2 = mid(&|r| c.eval(r).powi(2));
            assert!((c.integral(s, t) - i1).abs() < 1e-4, "{c}");
            assert!((c.integral_sq(s, t) - i2).abs() < 1e-4, "{c}");
        }
    }

    #[test]
    fn long_run_average_of_sinusoid_square() {
        let c = Coeff::sin(1.0, 0.5, 3.0, 0.1);
        let avg = c.long_run_average(|v| v * v);
        assert!((avg - (1.0 + 0.125)).abs() < 1e-14);
    }

    #[test]
    fn json_round_trip_and_strictness() {
        let text = r#"{"n":1,"a":[{"type":"const","c":1.0}],"B":[[{"type":"sin","base":1,"amp":0.5,"omega":2,"phase":0}]],
            "sigma":[{"type":"pwc","breaks":[1.0],"values":[0.1,0.2]}],"marks":{"weights":[1.0]},
            "gamma":[[{"type":"const","c":-0.5}]]}"#;
        let m = ModelSpec::from_json(text).unwrap();
        assert_eq!(ModelSpec::from_json(&m.to_json()).unwrap(), m);

        let extra = text.replace("\"n\":1,", "\"n\":1,\"alpha\":2,");
        assert!(ModelSpec::from_json(&extra).is_err());
        let extra_coeff = text.replace("\"c\":1.0}", "\"c\":1.0,\"d\":2}");
        assert!(ModelSpec::from_json(&extra_coeff).is_err());
        let bad_shape = text.replace("\"weights\":[1.0]", "\"weights\":[1.0,2.0]");
        assert!(matches!(ModelSpec::from_json(&bad_shape), Err(ModelError::Shape(_))));
    }

    #[test]
    fn pwc_rejects_unordered_breaks() {
        assert!(Coeff::pwc(vec![2.0, 1.0], vec![0.0, 1.0, 2.0]).is_err());
        assert!(Coeff::pwc(vec![1.0], vec![0.0]).is_err());
        assert!(Coeff::pwc(vec![0.0], vec![0.0, 1.0]).is_err());
    }

    fn arb_coeff() -> impl Strategy<Value = Coeff> {
        prop_oneof![
            (-5.0..5.0f64).prop_map(Coeff::constant),
            (-5.0..5.0f64, -3.0..3.0f64, 0.01..10.0f64, -4.0..4.0f64)
                .prop_map(|(b, a, w, p)| Coeff::sin(b, a, w, p)),
            prop::collection::vec((0.01..3.0f64, -5.0..5.0f64), 1..6).prop_map(|v| {
                let mut t = 0.0;
                let breaks: Vec<f64> = v.iter().map(|(d, _)| {
                    t += d;
                    t
                }).collect();
                let mut values: Vec<f64> = v.iter().map(|(_, x)| *x).collect();
                values.push(0.5);
                Coeff::pwc(breaks, values).unwrap()
            }),
        ]
    }

    proptest! {
        #[test]
        fn inf_sup_enclose_samples(c in arb_coeff()) {
            let (lo, hi) = (c.inf(), c.sup());
            for k in 0..2000 {
                let v = c.eval(k as f64 * 0.01);
                prop_assert!(lo - 1e-12 <= v && v <= hi + 1e-12);
            }
        }

        #[test]
        fn validation_is_deterministic(a in arb_coeff(), g in arb_coeff()) {
            let m = ModelSpec::new(
                vec![a],
                vec![vec![Coeff::constant(1.0)]],
                vec![Coeff::constant(0.3)],
                MarkSpace::new(vec![1.0]).unwrap(),
                vec![vec![g]],
            ).unwrap();
            prop_assert_eq!(validate_model(&m), validate_model(&m));
        }
    }
}
