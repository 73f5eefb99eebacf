use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use tempfile::TempDir;

struct Output {
    code: i32,
    stderr: String,
    dir: PathBuf,
    _tmp: TempDir,
}

fn run(cmd: &str, config: &str, extra: &[&str]) -> Output {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("config.json");
    fs::write(&cfg, config).unwrap();
    let dir = tmp.path().join("out");
    let out = Command::new(env!("CARGO_BIN_EXE_prestrain"))
        .arg(cmd)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .args(extra)
        .output()
        .unwrap();
    Output {
        code: out.status.code().unwrap(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
        dir,
        _tmp: tmp,
    }
}

fn json(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

fn f(v: &Value, key: &str) -> f64 {
    v[key].as_f64().unwrap_or_else(|| panic!("{key} missing in {v}"))
}

#[test]
fn flat_geometry_is_admissible() {
    let o = run("geometry", r#"{"scenario": "flat", "resolution": 9}"#, &[]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let j = json(&o.dir, "geometry.json");
    assert_eq!(j["admissible"], Value::Bool(true));
    assert_eq!(f(&j, "max_abs_r"), 0.0);
}

#[test]
fn product_metric_is_inadmissible() {
    let o = run("geometry", r#"{"scenario": "sphere-cap-constant-director", "director": "normal", "resolution": 17}"#, &[]);
    assert_eq!(o.code, 2);
    assert_eq!(json(&o.dir, "geometry.json")["admissible"], Value::Bool(false));
    // downstream commands refuse it too
    let o = run("functional", r#"{"scenario": "sphere-cap-constant-director", "director": "normal", "resolution": 17}"#, &[]);
    assert_eq!(o.code, 2, "{}", o.stderr);
}

#[test]
fn constant_director_cap_is_admissible() {
    let o = run("geometry", r#"{"scenario": "sphere-cap-constant-director", "resolution": 33}"#, &[]);
    assert_eq!(o.code, 0);
}

#[test]
fn config_errors_exit_one() {
    for cfg in [
        r#"{"scenario": "flat", "unexpected": true}"#,
        r#"{"scenario": "flat", "beta": 4.5}"#,
        r#"{"scenario": "moebius"}"#,
        "not json",
    ] {
        let o = run("converge", cfg, &[]);
        assert_eq!(o.code, 1, "{cfg}: {}", o.stderr);
        assert!(o.stderr.starts_with("error: configuration error"), "{}", o.stderr);
    }
    let o = run("geometry", r#"{"scenario": "flat"}"#, &["--bogus"]);
    assert_eq!(o.code, 1);
}

#[test]
fn saddle_strain_is_not_elliptic() {
    let o = run("strain", r#"{"scenario": "saddle-constant-director", "resolution": 9}"#, &[]);
    assert_eq!(o.code, 3);
    assert!(o.stderr.contains("not elliptic"));
}

#[test]
fn zero_strain_gives_zero_solution() {
    let o = run("strain", r#"{"scenario": "sphere-cap-constant-director", "resolution": 17}"#, &[]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert_eq!(f(&json(&o.dir, "strain.json"), "max_displacement"), 0.0);
}

#[test]
fn manufactured_strain_refines_at_second_order() {
    let o = run(
        "strain",
        r#"{"scenario": "sphere-cap-constant-director", "resolution": 17, "strain": {"kind": "manufactured"}}"#,
        &["--grid-refine", "2"],
    );
    assert_eq!(o.code, 0, "{}", o.stderr);
    let j = json(&o.dir, "strain.json");
    assert_eq!(j["levels"].as_array().unwrap().len(), 3);
    assert!(f(&j, "residual_order") >= 1.8, "{j}");
    assert_eq!(j["resolution"], Value::from(65));
}

#[test]
fn flat_functional_value() {
    let o = run("functional", r#"{"scenario": "flat", "material": {"lambda": 1.0}}"#, &[]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let j = json(&o.dir, "functional.json");
    assert!((f(&j, "i_beta") - 5.0 / 18.0).abs() < 1e-3);
    assert!(j["shell"]["director_is_normal"].as_bool().unwrap());
}

#[test]
fn minimizer_lowers_the_functional() {
    let cfg = r#"{"scenario": "flat", "resolution": 17, "displacement": {"kind": "zero"},
                  "minimize": {"perturbation": 0.01, "max_iters": 400}}"#;
    let o = run("functional", cfg, &["--seed", "7"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let m = &json(&o.dir, "functional.json")["minimize"];
    assert!(f(m, "final_i_beta") < f(m, "initial_i_beta"), "{m}");
    assert!(o.dir.join("functional_trace.csv").exists());
}

#[test]
fn rigid_motion_passes_absolute() {
    let cfg = r#"{"scenario": "custom-graph", "resolution": 33,
                  "displacement": {"kind": "rigid", "w": [0.3, -0.7, 0.4], "c": [0, 1, 2]}}"#;
    let o = run("converge", cfg, &[]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let j = json(&o.dir, "converge.json");
    assert_eq!(j["pass"], Value::Bool(true));
    assert_eq!(j["absolute"], Value::Bool(true));
}

#[test]
fn cylinder_converges_to_its_bending_energy() {
    let o = run("converge", r#"{"scenario": "flat", "displacement": {"kind": "cylinder", "curvature": 1.0}}"#, &[]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let j = json(&o.dir, "converge.json");
    assert_eq!(j["pass"], Value::Bool(true));
    assert!((f(&j, "i_beta") - 1.0 / 12.0).abs() < 1e-12);
}

#[test]
fn paraboloid_study_reports_the_functional() {
    let o = run("converge", r#"{"scenario": "flat", "resolution": 33}"#, &[]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let j = json(&o.dir, "converge.json");
    assert!((f(&j, "i_beta") - 1.0 / 6.0).abs() < 1e-3);
    let csv = fs::read_to_string(o.dir.join("converge.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2 + 5);
}

#[test]
fn non_isometry_is_rejected() {
    let o = run("converge", r#"{"scenario": "sphere-cap-constant-director", "resolution": 17}"#, &[]);
    assert_eq!(o.code, 1);
    assert!(o.stderr.contains("not an infinitesimal isometry"), "{}", o.stderr);
}

#[test]
fn recover_reports_matching_order() {
    let cfg = r#"{"scenario": "sphere-cap-constant-director", "resolution": 33, "order": 2,
                  "displacement": {"kind": "kernel", "boundary": [0.3, 0, 0, 1]}}"#;
    let o = run("recover", cfg, &[]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let j = json(&o.dir, "recover.json");
    assert!(f(&j, "matching_slope") >= 2.8, "{j}");
    assert_eq!(j["matching_passed"], Value::Bool(true));
    assert!(f(&j, "strain_limit_mismatch") <= 1e-10);
}

#[test]
fn outputs_are_stamped_and_deterministic() {
    let cfg = r#"{"scenario": "sphere-cap-constant-director", "resolution": 17, "order": 2,
                  "displacement": {"kind": "kernel", "boundary": [0.3, 0, 0, 1]}}"#;
    let a = run("recover", cfg, &[]);
    let b = run("recover", cfg, &[]);
    for name in ["recover.csv", "matching.csv", "recover.json"] {
        let x = fs::read(a.dir.join(name)).unwrap();
        assert_eq!(x, fs::read(b.dir.join(name)).unwrap(), "{name}");
        let text = String::from_utf8(x).unwrap();
        assert!(text.contains(env!("CARGO_PKG_VERSION")));
        assert!(text.contains("config_sha256"), "{name}");
    }
    let j = json(&a.dir, "recover.json");
    let hash = j["config_sha256"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    let csv = fs::read_to_string(a.dir.join("recover.csv")).unwrap();
    assert!(csv.lines().next().unwrap().ends_with(&format!("config_sha256={hash}")));
}
