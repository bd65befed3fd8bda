use lvjump::analysis::{
    estimate_lyapunov, estimate_lyapunov_functional, estimate_moment, invariant_distance, McConfig,
};
use lvjump::conditions::{c1, compute_regime_report, Regime};
use lvjump::integrate::simulate_system;
use lvjump::model::{InitialState, ModelSpec};
use lvjump::noise::sample_path_stream;

fn permanent() -> ModelSpec {
    ModelSpec::logistic(2.0, 1.0, 1.0, 0.5, 1.0)
}

#[test]
fn permanent_benchmark_constants() {
    let m = permanent();
    let c = c1(&m, 0);
    assert!(c.exact);
    assert!((c.value - (2.0 - 1.0 - 0.25 / 1.5)).abs() < 1e-15);
    let r = compute_regime_report(&m, &[2.0]);
    assert_eq!(r.classification, Regime::Permanent);
}

#[test]
fn deterministic_moment_follows_the_ode() {
    let m = ModelSpec::logistic(1.0, 1.0, 0.0, 0.0, 0.0);
    let x0 = InitialState::new(vec![0.5]).unwrap();
    let cfg = McConfig::new(3.0, 1.0 / 4096.0, 3, 8).with_checkpoints(6);
    let s = estimate_moment(&m, &x0, 3.0, &cfg).unwrap();
    for (t, mean) in s.checkpoints.iter().zip(&s.mean) {
        let exact = 0.5 * t.exp() / (1.0 + 0.5 * t.exp_m1());
        // log-Euler is within 10 h relative; the cube triples that
        assert!((mean / exact.powi(3) - 1.0).abs() < 30.0 * cfg.step, "t = {t}");
    }
    assert!(s.std_error.iter().all(|&e| e == 0.0));
}

#[test]
fn first_moment_is_the_endpoint_mean() {
    let m = permanent();
    let x0 = InitialState::new(vec![1.5]).unwrap();
    let cfg = McConfig::new(4.0, 1.0 / 64.0, 40, 21).with_checkpoints(1);
    let s = estimate_moment(&m, &x0, 1.0, &cfg).unwrap();
    let ends: Vec<f64> = (0..40)
        .map(|j| {
            let p = sample_path_stream(&m.marks, 4.0, 1.0 / 64.0, 21, j).unwrap();
            simulate_system(&m, &x0, &p).unwrap().terminal(0)
        })
        .collect();
    let direct = ends.iter().sum::<f64>() / ends.len() as f64;
    assert!((s.mean[0] - direct).abs() <= 1e-14 * direct);
}

#[test]
fn functional_decreases_toward_its_bound() {
    let m = permanent();
    let x0 = InitialState::new(vec![1.0]).unwrap();
    let short = estimate_lyapunov_functional(&m, &x0, &McConfig::new(25.0, 1.0 / 32.0, 200, 4)).unwrap();
    let long = estimate_lyapunov_functional(&m, &x0, &McConfig::new(50.0, 1.0 / 32.0, 200, 4)).unwrap();
    let noise = 3.0 * (short.std_error.powi(2) + long.std_error.powi(2)).sqrt();
    assert!(long.mean <= short.mean + noise, "{} vs {}", long.mean, short.mean);
    assert!(long.mean <= 2.0 + 3.0 * long.std_error);
}

#[test]
fn log_time_ratio_is_at_most_one() {
    let m = permanent();
    let est = estimate_lyapunov(&m, 0, 1.0, &McConfig::new(400.0, 1.0 / 16.0, 200, 6)).unwrap();
    assert!(est.fraction_log_ratio_below(400.0, 1.1) >= 0.99);
}

#[test]
fn invariant_distance_shrinks_with_horizon() {
    let m = permanent();
    let d = |t: f64| {
        invariant_distance(&m, 0, 0.05, 5.0, t, 1.0 / 32.0, 2000, (3, 4))
            .unwrap()
            .distance
    };
    let (early, late) = (d(0.5), d(8.0));
    let floor = 2.0 * lvjump::analysis::dkw_epsilon(2000, 0.01);
    assert!(late <= early + floor, "{late} vs {early}");
    assert!(late <= floor + 0.02);
}
