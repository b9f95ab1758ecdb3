use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use snefy::io::write_points;
use snefy::training::make_moons;

fn snefy(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_snefy")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const TRIVIAL_EXP_HALF: &str = r#"{"activation": {"kind": "exp_half"}, "statistic": "identity",
  "base": {"kind": "std_gaussian", "dim": 1}, "V": [[1.0]], "W": [[0.0]], "b": [0.0], "d": 1}"#;

const COS_1D: &str = r#"{"activation": {"kind": "cos"}, "statistic": "identity",
  "base": {"kind": "std_gaussian", "dim": 1}, "V": [[0.6, -0.4, 0.3]], "W": [[1.1], [-0.7], [2.0]],
  "b": [0.2, -1.0, 0.5], "d": 1}"#;

fn moons_config(dir: &Path, max_iters: usize) -> PathBuf {
    let text = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/moons.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["fit"]["max_iters"] = max_iters.into();
    v["fit"]["val_check_every"] = 10.into();
    v["fit"]["batch_size"] = 128.into();
    write(dir, "moons.json", &v.to_string())
}

#[test]
fn fit_moons_config_writes_model_and_history() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("moons.csv");
    write_points(&data, &make_moons(600, 0.1, 3).points).unwrap();
    let cfg = moons_config(dir.path(), 25);
    let out = dir.path().join("model.json");
    let o = snefy(&["fit", "--config", s(&cfg), "--data", s(&data), "--out", s(&out), "--test", s(&data)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.exists());
    let history = std::fs::read_to_string(dir.path().join("model.history.csv")).unwrap();
    assert!(history.starts_with("iter,train_nll,val_nll\n0,"));
    assert_eq!(history.lines().count(), 1 + 4);
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    for k in ["train_nll", "val_nll", "test_nll"] {
        assert!(summary[k].as_f64().unwrap().is_finite());
    }
    let e = snefy(&["eval", "--model", s(&out), "--data", s(&data)]);
    assert!(e.status.success());
    let ev: serde_json::Value = serde_json::from_slice(&e.stdout).unwrap();
    assert!((ev["nll_lebesgue"].as_f64().unwrap() - summary["test_nll"].as_f64().unwrap()).abs() < 1e-12);
}

#[test]
fn malformed_csv_reports_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "bad.csv", "x1,x2\n0.1,0.2\n0.3,zz\n");
    let cfg = moons_config(dir.path(), 1);
    let o = snefy(&["fit", "--config", s(&cfg), "--data", s(&data), "--out", s(&dir.path().join("m.json"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn unsupported_triple_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "d.csv", "x1\n1\n2\n3\n");
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"model": {"activation": "cos", "statistic": "identity", "base": {"kind": "poisson"}, "n": 2, "m": 1, "d": 1}}"#,
    );
    let o = snefy(&["fit", "--config", s(&cfg), "--data", s(&data), "--out", s(&dir.path().join("m.json"))]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("activation=cos") && err.contains("base=poisson"), "{err}");
}

#[test]
fn eval_trivial_model() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "m.json", TRIVIAL_EXP_HALF);
    let data = write(dir.path(), "d.csv", "x1\n0\n");
    let o = snefy(&["eval", "--model", s(&model), "--data", s(&data)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["nll_lebesgue"].as_f64().unwrap() - 0.918_938_5).abs() < 1e-6);
    assert!(v["nll_base"].as_f64().unwrap().abs() < 1e-12);

    let wide = write(dir.path(), "w.csv", "x1,x2\n0,1\n");
    assert_eq!(snefy(&["eval", "--model", s(&model), "--data", s(&wide)]).status.code(), Some(1));
    let empty = write(dir.path(), "e.csv", "x1\n");
    assert_eq!(snefy(&["eval", "--model", s(&model), "--data", s(&empty)]).status.code(), Some(1));
}

#[test]
fn sample_writes_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "m.json", COS_1D);
    let out = dir.path().join("s.csv");
    let o = snefy(&["sample", "--model", s(&model), "--count", "300", "--seed", "5", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let first = std::fs::read(&out).unwrap();
    assert_eq!(String::from_utf8_lossy(&first).lines().count(), 301);
    let side: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("s.seed.json")).unwrap()).unwrap();
    assert_eq!(side["seed"], 5);
    assert!(side["acceptance_rate"].as_f64().unwrap() > 0.0);

    let o = snefy(&["sample", "--model", s(&model), "--count", "300", "--seed", "5", "--out", s(&out)]);
    assert!(o.status.success());
    assert_eq!(std::fs::read(&out).unwrap(), first);

    let exp = write(dir.path(), "x.json", TRIVIAL_EXP_HALF);
    let o = snefy(&["sample", "--model", s(&exp), "--count", "3", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("unbounded"));
}

#[test]
fn verify_passes_and_catches_perturbed_kernel() {
    let o = snefy(&["verify", "--scope", "kernels", "--mc-samples", "200000"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["passed"], true);

    let o = snefy(&["verify", "--scope", "kernels", "--mc-samples", "200000", "--perturb-kernel", "gamma"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("verification failed: gamma#"), "{}", stderr(&o));

    assert_eq!(snefy(&["verify", "--scope", "everything"]).status.code(), Some(1));
}

#[test]
fn grid_dump() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "m.json", COS_1D);
    let out = dir.path().join("g.csv");
    let o = snefy(&["grid", "--model", s(&model), "--bounds", "-3,3", "--resolution", "7", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "x1,log_density");
    assert_eq!(lines.len(), 8);
    assert!(lines[4].starts_with("0,"));

    let o = snefy(&["grid", "--model", s(&model), "--bounds", "-3,3,-3,3", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    let sphere = write(
        dir.path(),
        "v.json",
        r#"{"activation": {"kind": "exp"}, "statistic": "identity", "base": {"kind": "uniform_sphere", "dim": 3},
          "V": [[1.0]], "W": [[0.1, 0.2, 0.3]], "b": [0.0], "d": 3}"#,
    );
    let o = snefy(&["grid", "--model", s(&sphere), "--bounds", "-1,1,-1,1", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn usage_and_environment_errors_exit_one() {
    assert_eq!(snefy(&["fit"]).status.code(), Some(1));
    assert_eq!(snefy(&["nonsense"]).status.code(), Some(1));
    assert_eq!(snefy(&["--help"]).status.code(), Some(0));
    let o = Command::new(env!("CARGO_BIN_EXE_snefy"))
        .args(["verify", "--scope", "normalization"])
        .env("SNEFY_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}
