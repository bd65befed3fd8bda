use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lvjump::model::{Coeff, MarkSpace, ModelSpec};
use tempfile::TempDir;

fn lvjump(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lvjump"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("run lvjump")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn model_file(dir: &TempDir, name: &str, model: &ModelSpec) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, model.to_json()).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_exit_codes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let good = model_file(&dir, "good.json", &ModelSpec::logistic(1.0, 1.0, 0.5, -0.5, 1.0));
    assert_eq!(code(&lvjump(&["validate", "--model", s(&good)], &out)), 0);

    let bad = model_file(&dir, "bad.json", &ModelSpec::logistic(1.0, 1.0, 0.5, -1.0, 1.0));
    let o = lvjump(&["validate", "--model", s(&bad)], &out);
    assert_eq!(code(&o), 1);
    let report = fs::read_to_string(out.join("validation.json")).unwrap();
    assert!(report.contains("gamma_11"), "{report}");

    let unknown = dir.path().join("unknown.json");
    let mut json: serde_json::Value =
        serde_json::from_str(&ModelSpec::logistic(1.0, 1.0, 0.5, -0.5, 1.0).to_json()).unwrap();
    json["sigmaa"] = json["sigma"].clone();
    fs::write(&unknown, json.to_string()).unwrap();
    let o = lvjump(&["validate", "--model", s(&unknown)], &out);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("sigmaa"));

    let broken = dir.path().join("broken.json");
    fs::write(&broken, "{\"n\": 1,").unwrap();
    assert_eq!(code(&lvjump(&["validate", "--model", s(&broken)], &out)), 2);
}

#[test]
fn simulate_writes_csv_with_bounds_and_oracle() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let m = model_file(&dir, "m.json", &ModelSpec::logistic(1.0, 1.0, 0.5, -0.5, 1.0));
    let o = lvjump(
        &["simulate", "--model", s(&m), "--T", "2", "--h", "0.001", "--with-bounds", "--with-oracle"],
        &out,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let x = fs::read_to_string(out.join("X.csv")).unwrap();
    assert!(x.starts_with("time,slot_kind,X_1\n0.0000000000000000e0,grid,1.0000000000000000e0\n"));
    for f in ["Y.csv", "Z.csv", "oracle.csv"] {
        assert_eq!(fs::read_to_string(out.join(f)).unwrap().lines().count(), x.lines().count());
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("sandwich.json")).unwrap()).unwrap();
    assert_eq!(summary["violations"], 0);
}

#[test]
fn simulate_competitive_system_has_no_sandwich_violations() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let c = Coeff::constant;
    let model = ModelSpec::new(
        vec![c(1.0), Coeff::sin(0.9, 0.3, 2.0, 0.0)],
        vec![vec![c(1.0), c(0.5)], vec![Coeff::pwc(vec![1.0], vec![0.2, 0.6]).unwrap(), c(0.7)]],
        vec![c(0.4), c(0.2)],
        MarkSpace::new(vec![1.0]).unwrap(),
        vec![vec![c(0.3)], vec![c(-0.4)]],
    )
    .unwrap();
    let m = model_file(&dir, "m.json", &model);
    let o = lvjump(&["simulate", "--model", s(&m), "--x0", "0.5,2", "--with-bounds", "--seed", "9"], &out);
    assert_eq!(code(&o), 0);
    let x = fs::read_to_string(out.join("X.csv")).unwrap();
    assert!(x.starts_with("time,slot_kind,X_1,X_2\n"));
    // a breakpoint slot at t = 1 is a grid row
    assert!(x.contains("\n1.0000000000000000e0,grid,"));
}

#[test]
fn simulate_divergence_exits_3_with_sentinel() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let m = model_file(&dir, "m.json", &ModelSpec::logistic(400.0, 1e-300, 0.0, 0.0, 0.0));
    let o = lvjump(&["simulate", "--model", s(&m), "--T", "4", "--h", "0.5"], &out);
    assert_eq!(code(&o), 3);
    let x = fs::read_to_string(out.join("X.csv")).unwrap();
    assert!(x.lines().last().unwrap().contains("DIVERGED"), "{x}");
}

#[test]
fn simulate_oracle_mismatch_exits_4() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let m = model_file(&dir, "m.json", &ModelSpec::logistic(1.0, 1.0, 0.5, -0.5, 1.0));
    let o = lvjump(
        &["simulate", "--model", s(&m), "--h", "0.25", "--with-oracle", "--oracle-tol", "1e-12"],
        &out,
    );
    assert_eq!(code(&o), 4);
    let verdict = fs::read_to_string(out.join("oracle.json")).unwrap();
    assert!(verdict.contains("\"pass\": false"));
}

#[test]
fn simulate_rejects_bad_grid_and_invalid_model() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let m = model_file(&dir, "m.json", &ModelSpec::logistic(1.0, 1.0, 0.5, -0.5, 1.0));
    assert_eq!(code(&lvjump(&["simulate", "--model", s(&m), "--T", "1", "--h", "0.3"], &out)), 2);
    assert_eq!(code(&lvjump(&["simulate", "--model", s(&m), "--x0", "-1"], &out)), 2);
    let bad = model_file(&dir, "bad.json", &ModelSpec::logistic(-1.0, 1.0, 0.5, -0.5, 1.0));
    assert_eq!(code(&lvjump(&["simulate", "--model", s(&bad)], &out)), 1);
}

#[test]
fn dumped_path_reproduces_the_simulation() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let model = ModelSpec::logistic(1.0, 1.0, 0.5, -0.5, 2.0);
    let m = model_file(&dir, "m.json", &model);
    let dump = dir.path().join("path.bin");
    let o = lvjump(&["simulate", "--model", s(&m), "--seed", "5", "--dump-path", s(&dump)], &out);
    assert_eq!(code(&o), 0);
    let (path, marks) = lvjump::noise::read_path_dump(fs::File::open(&dump).unwrap()).unwrap();
    assert_eq!(marks, 1);
    let traj = lvjump::integrate::simulate_system(
        &model,
        &lvjump::InitialState::new(vec![1.0]).unwrap(),
        &path,
    )
    .unwrap();
    let csv = fs::read_to_string(out.join("X.csv")).unwrap();
    let last: f64 = csv.lines().last().unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert_eq!(last, traj.terminal(0));
}

#[test]
fn analyze_verdicts_and_prerequisites() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let perm = model_file(&dir, "perm.json", &ModelSpec::logistic(2.0, 1.0, 1.0, 0.5, 1.0));
    let ext = model_file(&dir, "ext.json", &ModelSpec::logistic(0.1, 1.0, 1.0, -0.5, 1.0));
    let bench = model_file(&dir, "bench.json", &ModelSpec::logistic(1.0, 1.0, 0.5, -0.5, 1.0));
    let mc = ["--T", "10", "--h", "0.0625", "--paths", "100"];

    let o = lvjump(&[&["analyze", "couple", "--model", s(&perm), "--x", "1.5", "--y", "1.5"][..], &mc].concat(), &out);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(out.join("couple.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[1].parse::<f64>().unwrap(), 0.0);
        assert_eq!(f[5].parse::<f64>().unwrap(), 0.0);
    }

    let o = lvjump(&[&["analyze", "inverse-moment", "--model", s(&ext)][..], &mc].concat(), &out);
    assert_eq!(code(&o), 5);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("\"classification\": \"EXTINCT\""), "{err}");

    let o = lvjump(&[&["analyze", "moments", "--model", s(&bench)][..], &mc].concat(), &out);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(out.join("moments.csv")).unwrap();
    assert_eq!(csv.lines().count(), 51);
    assert!(csv.starts_with("checkpoint,mean,std_error,bound,flag\n"));
    let verdict = fs::read_to_string(out.join("moments_verdict.json")).unwrap();
    assert!(verdict.contains("\"verdict\": \"bounded\""));

    for which in ["lyapunov", "inverse-moment", "invariant"] {
        let o = lvjump(&[&["analyze", which, "--model", s(&perm)][..], &mc].concat(), &out);
        assert_eq!(code(&o), 0, "{which}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(out.join(format!("{which}_verdict.json")).exists());
    }

    let o = lvjump(&[&["analyze", "moments", "--model", s(&bench), "--species", "2"][..], &mc].concat(), &out);
    assert_eq!(code(&o), 2);
}

#[test]
fn invariant_refuses_time_dependent_model() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let mut model = ModelSpec::logistic(2.0, 1.0, 1.0, 0.5, 1.0);
    model.a[0] = Coeff::sin(2.0, 0.2, 1.0, 0.0);
    let m = model_file(&dir, "m.json", &model);
    let o = lvjump(&["analyze", "invariant", "--model", s(&m), "--T", "1", "--paths", "10"], &out);
    assert_eq!(code(&o), 5);
}

#[test]
fn classify_reports_extinction() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let m = model_file(&dir, "m.json", &ModelSpec::logistic(0.1, 1.0, 1.0, -0.5, 1.0));
    let o = lvjump(&["classify", "--model", s(&m)], &out);
    assert_eq!(code(&o), 0);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("regime.json")).unwrap()).unwrap();
    assert_eq!(report["classification"], "EXTINCT");
    let eta = report["species"][0]["eta"].as_f64().unwrap();
    assert!((eta + 0.593147).abs() < 1e-6);
}

#[test]
fn sweep_grid_errors() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let m = model_file(&dir, "m.json", &ModelSpec::logistic(0.1, 1.0, 1.0, -0.5, 1.0));
    let base = ["sweep", "--model", s(&m), "--param", "a.1"];
    assert_eq!(code(&lvjump(&base, &out)), 2);
    assert_eq!(code(&lvjump(&[&base[..], &["--range", "1:0:0.1"]].concat(), &out)), 2);
    assert_eq!(code(&lvjump(&[&base[..], &["--values", "0.5,NaN"]].concat(), &out)), 2);
    assert_eq!(code(&lvjump(&[&base[..], &["--values", "inf"]].concat(), &out)), 2);
    let o = lvjump(&["sweep", "--model", s(&m), "--param", "q.1", "--values", "1"], &out);
    assert_eq!(code(&o), 2);
}

#[test]
fn sweep_marks_invalid_points() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let m = model_file(&dir, "m.json", &ModelSpec::logistic(0.1, 1.0, 1.0, -0.5, 1.0));
    let o = lvjump(&["sweep", "--model", s(&m), "--param", "gamma.1.1", "--values", "-1.5,-0.5,0.5"], &out);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let labels: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(labels, ["INVALID", "EXTINCT", "EXTINCT"]);
}

#[test]
fn missing_model_is_bad_input() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&lvjump(&["classify"], &dir.path().join("out"))), 2);
}
