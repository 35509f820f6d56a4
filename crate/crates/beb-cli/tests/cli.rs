use std::path::Path;
use std::process::{Command, Output};

use beb_core::models::{BuiltinName, BuiltinSpec};
use beb_core::spec_io::{export_model_json, load_model_spec};
use serde_json::Value;

fn beb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_beb")).args(args).output().expect("running beb")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("beb exited by signal")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const SN3D_EXPLICIT: &str = r#"{
  "n": 3,
  "A": [[-0.7, 1.0, 0.0], [-0.15000000000000002, 0.0, 1.0], [-0.025000000000000005, 0.0, 0.0]],
  "A1": [[-1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]],
  "M": [0.0, 0.0, -1.0],
  "M1": [0.0, 0.0, 0.0],
  "B": [0.0, 1.85, 1.6],
  "C": [1.0, 0.0, 0.0]
}"#;

#[test]
fn validate_builtin_succeeds() {
    let out = beb(&["validate", "--builtin", "sn3d"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = json(&out);
    assert_eq!(v["result"]["passed"], Value::Bool(true));
    assert!(v["header"]["model_sha256"].as_str().unwrap().len() == 64);
}

#[test]
fn zero_reset_direction_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(
        dir.path(),
        "bad.json",
        r#"{"n": 3, "A": [[-0.1, 1, 0], [-1, -0.1, 0], [0, 0, -0.2]], "M": [1, 0, 0], "B": [0, 0, 0], "C": [1, 0, 0]}"#,
    );
    let out = beb(&["validate", "--model", &path]);
    assert_eq!(code(&out), 2);
    let err = stderr(&out);
    assert!(err.contains("CtAB positive"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
}

#[test]
fn unknown_flag_rejected() {
    let out = beb(&["validate", "--builtin", "sn3d", "--bogus"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("--bogus"));
}

#[test]
fn unknown_subcommand_rejected() {
    assert_eq!(code(&beb(&["frobnicate"])), 2);
}

#[test]
fn malformed_range_rejected() {
    let out = beb(&["diagram", "--builtin", "sn3d", "--mu-range", "0.01:0.02"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn wrong_matrix_shape_named() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(
        dir.path(),
        "shape.json",
        r#"{"n": 3, "A": [[1, 0], [0, 1], [0, 0]], "M": [1, 0, 0], "B": [0, 1, 0], "C": [1, 0, 0]}"#,
    );
    let out = beb(&["validate", "--model", &path]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("A: expected 3×3"), "{}", stderr(&out));
}

#[test]
fn no_cycle_in_bracket_is_numerical_failure() {
    let out = beb(&["codim2", "--builtin", "sn3d", "--type", "sn", "--bracket", "0.2:0.3"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn export_round_trip_is_field_wise_identical() {
    let dir = tempfile::tempdir().unwrap();
    for name in [BuiltinName::Sn3d, BuiltinName::Pd3d, BuiltinName::AirfoilFixture] {
        let model = BuiltinSpec::new(name).build().unwrap();
        let path = dir.path().join("export.json");
        std::fs::write(&path, export_model_json(&model).unwrap()).unwrap();
        let back = load_model_spec(&path).unwrap().model().unwrap();
        assert_eq!(back, model, "{name:?}");
    }
}

#[test]
fn explicit_spec_equals_builtin() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "sn3d.json", SN3D_EXPLICIT);
    let explicit = load_model_spec(Path::new(&path)).unwrap().model().unwrap();
    let builtin = BuiltinSpec::new(BuiltinName::Sn3d).build().unwrap();
    assert_eq!(explicit, builtin);

    let a = json(&beb(&["validate", "--model", &path]));
    let b = json(&beb(&["validate", "--builtin", "sn3d"]));
    assert_eq!(a["header"]["model_sha256"], b["header"]["model_sha256"]);
}

#[test]
fn builtin_stanza_applies_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "stanza.json", r#"{"builtin": {"name": "sn3d", "params": {"b2": 1.85}}}"#);
    let from_file = load_model_spec(Path::new(&path)).unwrap().model().unwrap();
    let direct = BuiltinSpec::new(BuiltinName::Sn3d).with("b2", 1.85).build().unwrap();
    assert_eq!(from_file, direct);
}

#[test]
fn diagram_csv_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let args = |p: &str| {
        vec![
            "diagram".to_string(),
            "--builtin".into(),
            "pd3d".into(),
            "--mu-range".into(),
            "0.01:0.03:5".into(),
            "--transient".into(),
            "100".into(),
            "--window".into(),
            "50".into(),
            "--out".into(),
            p.to_string(),
        ]
    };
    let p1 = dir.path().join("one.csv");
    let p2 = dir.path().join("two.csv");
    for p in [&p1, &p2] {
        let a = args(p.to_str().unwrap());
        let out = beb(&a.iter().map(String::as_str).collect::<Vec<_>>());
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    let one = std::fs::read(&p1).unwrap();
    assert!(!one.is_empty());
    assert!(one.starts_with(b"# beb "));
    assert_eq!(one, std::fs::read(&p2).unwrap());
}

#[test]
fn simulate_csv_is_byte_stable() {
    let run = || beb(&["simulate", "--builtin", "sn3d", "--mu", "0.01", "--t-end", "20"]);
    let (a, b) = (run(), run());
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert!(String::from_utf8_lossy(&a.stdout).contains("# model_sha256 = "));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn codim2_locates_saddle_node_point() {
    let out = beb(&["codim2", "--builtin", "sn3d", "--type", "sn", "--bracket", "1.5:2.0"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let eta0 = json(&out)["result"]["eta0"].as_f64().unwrap();
    assert!((eta0 - 1.7819).abs() < 1e-3, "eta0 {eta0}");
}

#[test]
fn pd_coefficients_give_reference_slope() {
    let out = beb(&["coeffs", "--builtin", "pd3d", "--type", "pd"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = json(&out);
    let r = &v["result"];
    for k in ["a", "b", "c", "d", "e", "f"] {
        assert!(r[k].is_number(), "missing {k}");
    }
    let slope = r["slope"].as_f64().unwrap();
    assert!((slope - 0.5053).abs() < 1e-3, "slope {slope}");
}
