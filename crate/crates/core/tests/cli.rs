use std::path::Path;
use std::process::{Command, Output};

use h2_containment::cli::exit_code;
use h2_containment::report::{parse_design_report, to_json, DesignReport};
use h2_containment::Error;

mod common;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_h2-containment"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn model(name: &str) -> String {
    common::model_path(name).to_string_lossy().into_owned()
}

fn design_report(o: &Output) -> DesignReport {
    parse_design_report(&stdout(o)).unwrap()
}

fn write_variant(dir: &Path, name: &str, edit: impl FnOnce(&mut serde_json::Value)) -> String {
    let text = std::fs::read_to_string(common::model_path("homogeneous.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    edit(&mut v);
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn shipped_models_validate() {
    for name in ["homogeneous.json", "heterogeneous.json"] {
        let o = run(&["validate", &model(name)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        assert!(stdout(&o).starts_with("valid "));
    }
}

#[test]
fn leader_to_leader_edge_is_a_model_violation() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_variant(dir.path(), "bad.json", |v| {
        v["graph"]["edges"].as_array_mut().unwrap().push(serde_json::json!([7, 8]));
    });
    let o = run(&["validate", &path]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("leaders must not receive information"), "{}", stderr(&o));
}

#[test]
fn truncated_json_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(common::model_path("homogeneous.json")).unwrap();
    let path = dir.path().join("cut.json");
    std::fs::write(&path, &text[..text.len() / 2]).unwrap();
    let o = run(&["validate", path.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn unknown_key_is_reported_with_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_variant(dir.path(), "typo.json", |v| {
        v["design"]["gama"] = serde_json::json!(1.0);
    });
    let o = run(&["validate", &path]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("design.gama"), "{}", stderr(&o));
}

#[test]
fn ragged_matrix_is_reported_with_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_variant(dir.path(), "ragged.json", |v| {
        v["plant"]["A"][1] = serde_json::json!([0, 2]);
    });
    let o = run(&["validate", &path]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("plant.A[1]"), "{}", stderr(&o));
}

#[test]
fn homogeneous_design_report() {
    let o = run(&["design", &model("homogeneous.json")]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = design_report(&o);
    assert!(r.accepted);
    assert!((r.h2_norm.unwrap() - 3.2966).abs() <= 0.01);
    assert_eq!(r.sqrt_gamma, 17.0);
    assert!(r.certificate.passed());
}

#[test]
fn heterogeneous_design_report() {
    let o = run(&["design", &model("heterogeneous.json")]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = design_report(&o);
    assert!(r.accepted);
    assert!((r.h2_norm.unwrap() - 6.2937).abs() <= 0.01);
    let h = r.heterogeneous.unwrap();
    let s: Vec<f64> = h.agents.iter().map(|a| a.s_value).collect();
    let expected = [0.5630, 0.3917, 0.3350, 0.5630, 0.3917, 0.3350];
    for (got, want) in s.iter().zip(expected) {
        assert!((got - want).abs() <= 5e-3, "S = {s:?}");
    }
}

#[test]
fn low_gamma_is_rejected_with_report() {
    let o = run(&["design", &model("homogeneous.json"), "--gamma", "100"]);
    assert_eq!(code(&o), 4);
    let r = design_report(&o);
    assert!(!r.accepted);
    let bound = r.homogeneous.unwrap().bound;
    assert!((bound - 288.2621).abs() <= 1e-3, "bound {bound}");
}

#[test]
fn report_round_trips_byte_identically() {
    for name in ["homogeneous.json", "heterogeneous.json"] {
        let o = run(&["design", &model(name), "--quadrature"]);
        let text = stdout(&o);
        let again = to_json(&parse_design_report(&text).unwrap()).unwrap();
        assert_eq!(text, again);
    }
}

#[test]
fn text_rendering_agrees_with_json() {
    let json = design_report(&run(&["design", &model("homogeneous.json")]));
    let text = stdout(&run(&["design", &model("homogeneous.json"), "--format", "text"]));
    let norm = h2_containment::report::sig6(json.h2_norm.unwrap());
    assert!(text.contains(&format!("H2 norm = {norm}")), "{text}");
    let bound = h2_containment::report::sig6(json.homogeneous.unwrap().bound);
    assert!(text.contains(&format!("certified bound = {bound}")), "{text}");
}

#[test]
fn h2_command_values_and_quadrature_gap() {
    for (name, expected) in [("homogeneous.json", 3.2966), ("heterogeneous.json", 6.2937)] {
        let o = run(&["h2", &model(name), "--quadrature"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
        assert!((v["h2_norm"].as_f64().unwrap() - expected).abs() <= 0.01);
        assert!(v["quadrature"]["relative_gap"].as_f64().unwrap() <= 1e-3);
    }
}

#[test]
fn simulation_is_reproducible_for_a_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let o = run(&[
            "simulate",
            &model("heterogeneous.json"),
            "--seed",
            "7",
            "--t-final",
            "5",
            "--out-dir",
            dir.path().to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("trace.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn nominal_homogeneous_simulation_converges() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "simulate",
        &model("homogeneous.json"),
        "--no-disturbance",
        "--svg",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["metrics"]["decay_ratio"].as_f64().unwrap() <= 1e-3);
    for f in v["files"].as_array().unwrap() {
        assert!(dir.path().join(f.as_str().unwrap()).is_file());
    }
    let csv = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(csv.starts_with("time,"));
}

#[test]
fn noisy_homogeneous_simulation_stays_bounded() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["simulate", &model("homogeneous.json"), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let eps = v["metrics"]["final_eps_norm"].as_f64().unwrap();
    assert!(eps.is_finite() && eps < 1e3, "final eps {eps}");
    assert!(dir.path().join("trace.csv").is_file());
}

#[test]
fn failures_leave_no_files_behind() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let bad = write_variant(dir.path(), "bad.json", |v| {
        v["graph"]["edges"].as_array_mut().unwrap().push(serde_json::json!([7, 8]));
    });
    let o = run(&["design", &bad, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(!out.exists());

    let sim_dir = dir.path().join("sim");
    let o = run(&[
        "simulate",
        &model("homogeneous.json"),
        "--gamma",
        "100",
        "--out-dir",
        sim_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 4);
    assert!(!sim_dir.exists());

    let o = run(&[
        "simulate",
        &model("homogeneous.json"),
        "--dt",
        "0.0007",
        "--out-dir",
        sim_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
    assert!(!sim_dir.exists());

    let entries: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(entries, vec![std::ffi::OsString::from("bad.json")]);
}

#[test]
fn exit_code_contract() {
    assert_eq!(exit_code(&Error::Io("x".into())), 2);
    assert_eq!(exit_code(&Error::FollowersDisconnected), 3);
    assert_eq!(exit_code(&Error::CertificateFailed(Box::default())), 5);
    assert_eq!(
        exit_code(&Error::NonFiniteState {
            time: 1.0,
            magnitude: 1e10
        }),
        6
    );
}
