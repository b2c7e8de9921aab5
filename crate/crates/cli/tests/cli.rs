use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn convexmc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_convexmc")).args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn indep_mh_config() -> Value {
    json!({
        "schema_version": 1,
        "body": {"kind": "box", "dim": 2, "param": 1.0},
        "density": {"kind": "gaussian", "alpha": 0.5},
        "integrand": {"kind": "coordinate", "index": 0},
        "sampler": {"sampler": "independent_mh"},
        "n": 10000,
        "n0": 19,
        "replications": 200,
        "seed": 7,
        "reference": 0.0
    })
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> String {
    let p = dir.join(name);
    std::fs::write(&p, cfg.to_string()).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn plan_hit_and_run() {
    let v = stdout_json(&convexmc(&["plan", "har", "--d", "1", "--r", "1", "--n", "10000"]));
    assert_eq!(v["n0"], json!(18_761_600_000_000_000u64));
    assert_eq!(v["provenance"], "hit_and_run");
    let b = v["bound_at"]["10000"].as_f64().unwrap();
    assert!((b - (9.5e5 + 6.4e11)).abs() < 1e-3);
}

#[test]
fn plan_independent_metropolis() {
    let v = stdout_json(&convexmc(&["plan", "indep-mh", "--C", "2.718281828", "--vol", "4", "--n", "10000"]));
    assert_eq!(v["n0"], json!(19));
    assert_eq!(v["bound_kind"], "squared_error");
}

#[test]
fn plan_ball_walk_with_several_n() {
    let v = stdout_json(&convexmc(&["plan", "ball-walk", "--alpha", "1", "--d", "3", "--n", "100,10000"]));
    assert_eq!(v["delta"], json!(0.5));
    assert_eq!(v["n0"], json!(583_475_200u64));
    assert!(v["bound_at"]["100"].as_f64().unwrap() > v["bound_at"]["10000"].as_f64().unwrap());
}

#[test]
fn plan_rejects_bad_parameters() {
    let out = convexmc(&["plan", "indep-mh", "--C", "0.5", "--vol", "4", "--n", "10"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("C must be"));
    assert_eq!(convexmc(&["plan", "har", "--d", "1"]).status.code(), Some(2));
}

#[test]
fn spectral_inline_and_file() {
    let v = stdout_json(&convexmc(&["spectral", "0.7,0.3;0.3,0.7"]));
    assert!((v["gap"].as_f64().unwrap() - 0.6).abs() < 1e-12);
    assert!((v["phi"].as_f64().unwrap() - 0.3).abs() < 1e-12);

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("k.json");
    std::fs::write(&p, r#"{"kernel": [[0.1, 0.9], [0.9, 0.1]]}"#).unwrap();
    let v = stdout_json(&convexmc(&["spectral", p.to_str().unwrap()]));
    assert!((v["lambda"].as_f64().unwrap() + 0.8).abs() < 1e-12);
}

#[test]
fn spectral_reducible_exits_two() {
    let out = convexmc(&["spectral", "1,0;0,1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).to_lowercase().contains("reducible"));
}

#[test]
fn baseline_ball_in_ball() {
    let v = stdout_json(&convexmc(&["baseline", "--body", "ball", "--d", "2", "--r", "2", "--n", "10000", "--seed", "1"]));
    assert!((v["reference_rate"].as_f64().unwrap() - 0.25).abs() < 1e-12);
    assert!((v["r_pow_minus_d"].as_f64().unwrap() - 0.25).abs() < 1e-12);
    let rate = v["acceptance_rate"].as_f64().unwrap();
    assert!((rate - 0.25).abs() <= 3.0 * v["stderr"].as_f64().unwrap());
}

#[test]
fn run_meets_the_squared_error_bound() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &indep_mh_config());
    let v = stdout_json(&convexmc(&["run", "--config", &cfg]));
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["rng"], "chacha20");
    assert_eq!(v["seed"], 7);
    assert_eq!(v["config"]["n0"], 19);
    assert_eq!(v["record"]["estimates"].as_array().unwrap().len(), 200);
    assert!(v["record"]["mse"].as_f64().unwrap() <= 2.179e-3);
}

#[test]
fn run_is_byte_identical_across_repeats_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = indep_mh_config();
    cfg["n"] = json!(2000);
    cfg["replications"] = json!(48);
    let cfg = write_config(dir.path(), "c.json", &cfg);
    let outs: Vec<Vec<u8>> = [("a", "1"), ("b", "1"), ("c", "4")]
        .iter()
        .map(|(name, threads)| {
            let p = dir.path().join(format!("out_{name}.json"));
            let o = convexmc(&["run", "--config", &cfg, "--threads", threads, "--out", p.to_str().unwrap()]);
            assert!(o.status.success());
            std::fs::read(p).unwrap()
        })
        .collect();
    assert_eq!(outs[0], outs[1]);
    assert_eq!(outs[0], outs[2]);

    let csv = |t: &str| {
        let o = convexmc(&["run", "--config", &cfg, "--format", "csv", "--threads", t]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        o.stdout
    };
    let one = csv("1");
    assert_eq!(one, csv("3"));
    let text = String::from_utf8(one).unwrap();
    assert!(!text.contains('\r'));
    assert!(text.lines().any(|l| l == "replication,seed,estimate"));
    assert!(text.starts_with("# schema_version=1\n"));
}

#[test]
fn run_seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = indep_mh_config();
    cfg["n"] = json!(100);
    cfg["replications"] = json!(3);
    let cfg = write_config(dir.path(), "c.json", &cfg);
    let a = stdout_json(&convexmc(&["run", "--config", &cfg, "--seed", "99"]));
    assert_eq!(a["seed"], 99);
    assert_eq!(a["config"]["seed"], 99);
}

#[test]
fn run_constant_integrand_has_zero_mse() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = indep_mh_config();
    cfg["integrand"] = json!({"kind": "constant", "value": 0.7});
    cfg["reference"] = json!(0.7);
    cfg["n"] = json!(500);
    cfg["replications"] = json!(5);
    let cfg = write_config(dir.path(), "c.json", &cfg);
    let v = stdout_json(&convexmc(&["run", "--config", &cfg]));
    assert_eq!(v["record"]["mse"], json!(0.0));
}

#[test]
fn run_writes_configured_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = indep_mh_config();
    cfg["n"] = json!(100);
    cfg["replications"] = json!(2);
    let json_path = dir.path().join("r.json");
    let csv_path = dir.path().join("r.csv");
    cfg["output"] = json!({"json": json_path, "csv": csv_path});
    let cfg = write_config(dir.path(), "c.json", &cfg);
    assert!(convexmc(&["run", "--config", &cfg]).status.success());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
    assert_eq!(v["record"]["replications"], 2);
    assert_eq!(std::fs::read_to_string(&csv_path).unwrap().lines().filter(|l| !l.starts_with('#')).count(), 3);
}

#[test]
fn auto_burn_in_uses_the_plan() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = indep_mh_config();
    cfg["n0"] = json!("auto");
    cfg["n"] = json!(100);
    cfg["replications"] = json!(2);
    let cfg = write_config(dir.path(), "c.json", &cfg);
    let v = stdout_json(&convexmc(&["run", "--config", &cfg]));
    assert_eq!(v["config"]["n0"], 19);
}

#[test]
fn infeasible_auto_burn_in_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "schema_version": 1,
        "body": {"kind": "ball", "dim": 1, "param": 1.0},
        "density": {"kind": "constant"},
        "integrand": {"kind": "coordinate", "index": 0},
        "sampler": {"sampler": "hit_and_run"},
        "n": 100, "n0": "auto", "replications": 2, "seed": 1,
        "reference": 0.0,
        "initial": "uniform_unit_ball"
    });
    let cfg = write_config(dir.path(), "c.json", &cfg);
    let out = convexmc(&["run", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("18761600000000000"));
}

#[test]
fn invalid_configs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = indep_mh_config();
    cfg["schema_version"] = json!(2);
    let bad = write_config(dir.path(), "bad.json", &cfg);
    assert_eq!(convexmc(&["run", "--config", &bad]).status.code(), Some(2));
    assert_eq!(convexmc(&["run", "--config", "/nonexistent/config.json"]).status.code(), Some(2));
    std::fs::write(dir.path().join("garbage.json"), "{").unwrap();
    let garbage = dir.path().join("garbage.json");
    assert_eq!(convexmc(&["run", "--config", garbage.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn ball_walk_run_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "schema_version": 1,
        "body": {"kind": "ball", "dim": 2, "param": 1.0},
        "density": {"kind": "gaussian", "alpha": 0.5},
        "integrand": {"kind": "coordinate", "index": 1},
        "sampler": {"sampler": "lazy_ball_walk"},
        "n": 2000, "n0": 100, "replications": 8, "seed": 3,
        "reference": 0.0
    });
    let cfg = write_config(dir.path(), "c.json", &cfg);
    let v = stdout_json(&convexmc(&["run", "--config", &cfg]));
    assert_eq!(v["record"]["sampler"]["name"], "ball_walk");
    assert_eq!(v["record"]["sampler"]["laziness"], 1);
    assert_eq!(v["record"]["sampler"]["delta"], json!(1.0 / 3f64.sqrt()));
}
