use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

use flmicro::cli::CHECKS;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn flmicro(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flmicro")).args(args).output().unwrap()
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn every_registered_check_has_a_passing_fixture() {
    for (command, check) in CHECKS {
        let path = fixtures().join(command).join(format!("{check}.json"));
        assert!(path.exists(), "missing fixture {}", path.display());
        let out = flmicro(&[command, "--in", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{command}/{check}: {}", String::from_utf8_lossy(&out.stderr));
        let r = report(&out);
        assert_eq!(r["passed"], true);
        assert_eq!(r["command"], *command);
    }
}

#[test]
fn registry_covers_every_check_tag() {
    for dir in ["estimate", "microlocal"] {
        for entry in std::fs::read_dir(fixtures().join(dir)).unwrap() {
            let path = entry.unwrap().path();
            let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
            let tag = v["check"].as_str().unwrap().to_string();
            assert!(CHECKS.contains(&(dir, tag.as_str())), "{dir}/{tag} is not registered");
        }
    }
}

#[test]
fn triangle_polyhedron_report() {
    let dir = tempfile::tempdir().unwrap();
    let tri = dir.path().join("tri.json");
    std::fs::write(&tri, r#"{"vertices": [[0, 0], [1, 0], [0, 2]]}"#).unwrap();
    let out = flmicro(&["polyhedron", "--in", tri.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let r = &report(&out)["results"][0]["report"];
    assert_eq!(r["mu0"], 1);
    assert_eq!(r["mu1"], 2);
    assert_eq!(r["mu"], "2/1");
    assert_eq!(r["delta"], "0/1");
}

#[test]
fn homogeneous_weight_is_submultiplicative() {
    let out = flmicro(&["weight-check", "--family", "homogeneous", "--m", "2", "--cond", "SM"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    let cond = &r["results"][0]["report"]["conditions"][0];
    assert_eq!(cond["condition"], "SM");
    assert_eq!(cond["passed"], true);
    assert!(cond["empirical_constant"].as_f64().unwrap() <= 4.0);
}

#[test]
fn missing_file_is_a_configuration_error() {
    let out = flmicro(&["polyhedron", "--in", "/nonexistent/tri.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    assert!(!out.stderr.is_empty());
}

#[test]
fn malformed_descriptors_are_configuration_errors() {
    let dir = tempfile::tempdir().unwrap();
    for (name, text) in [
        ("syntax.json", "{\"vertices\": [[0, 0], "),
        ("shape.json", r#"{"vertices": "none"}"#),
        ("tag.json", r#"{"check": "no_such_check"}"#),
    ] {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        let command = if name == "tag.json" { "estimate" } else { "polyhedron" };
        let out = flmicro(&[command, "--in", p.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(2), "{name}");
    }
    assert_eq!(flmicro(&["estimate"]).status.code(), Some(2));
    assert_eq!(flmicro(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn failed_checks_exit_one_and_still_report() {
    let dir = tempfile::tempdir().unwrap();
    // not complete: the facet normal through (1, 1) and (2, 0) has a zero entry
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"vertices": [[0, 0], [2, 0], [1, 1]]}"#).unwrap();
    let out = flmicro(&["polyhedron", "--in", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let r = report(&out);
    assert_eq!(r["passed"], false);
    assert!(r["results"][0]["report"]["error"].is_string());

    // the worked symbol is characteristic over x = (0, 0)
    let mut v: Value =
        serde_json::from_str(&std::fs::read_to_string(fixtures().join("estimate/elliptic.json")).unwrap()).unwrap();
    v["k"]["center"] = serde_json::json!([0.0, 0.0]);
    let p = dir.path().join("char.json");
    std::fs::write(&p, v.to_string()).unwrap();
    let out = flmicro(&["estimate", "--in", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(report(&out)["results"][0]["report"]["passed"], false);
}

#[test]
fn formula_preconditions_are_configuration_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.json");
    std::fs::write(&p, r#"{"check": "thresholds", "t_tilde": 2.5, "s": 10, "q": 2, "case": "a"}"#).unwrap();
    let out = flmicro(&["demo", "--in", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(&p, r#"{"check": "bootstrap", "t": 1, "s": 2, "r": 1, "eps": 0}"#).unwrap();
    assert_eq!(flmicro(&["demo", "--in", p.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn reports_are_byte_identical_across_runs() {
    for (command, check) in [("estimate", "product"), ("weight-check", "conditions"), ("demo", "propagation")] {
        let path = fixtures().join(command).join(format!("{check}.json"));
        let args = [command, "--in", path.to_str().unwrap(), "--seed", "7"];
        let (a, b) = (flmicro(&args), flmicro(&args));
        assert_eq!(a.status.code(), Some(0));
        assert_eq!(a.stdout, b.stdout, "{command}/{check}");
    }
}

#[test]
fn seed_changes_random_fields() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("q.json");
    std::fs::write(
        &p,
        r#"{"grid": {"n": 1, "extent": 8, "points": 32},
            "symbol": {"expr": {"op": "const", "re": 1}},
            "field": {"kind": "band_limited", "band": 2}}"#,
    )
    .unwrap();
    let run = |seed: &str| flmicro(&["quantize", "--in", p.to_str().unwrap(), "--seed", seed, "--format", "csv"]).stdout;
    assert_eq!(run("1"), run("1"));
    assert_ne!(run("1"), run("2"));
}

#[test]
fn csv_and_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("mask.csv");
    let fixture = fixtures().join("microlocal/mask.json");
    let out = flmicro(&[
        "microlocal",
        "--in",
        fixture.to_str().unwrap(),
        "--format",
        "csv",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&out_path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("xi1,xi2,inside"));
    assert_eq!(lines.count(), 32 * 32);
}

#[test]
fn grid_flags_override_descriptors() {
    let fixture = fixtures().join("microlocal/mask.json");
    let out = flmicro(&["microlocal", "--in", fixture.to_str().unwrap(), "--grid-points", "16"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(report(&out)["results"][0]["report"]["grid"]["points"], 16);
}

#[test]
fn thread_cap_is_validated() {
    let fixture = fixtures().join("demo/bootstrap.json");
    let run = |v: &str| {
        Command::new(env!("CARGO_BIN_EXE_flmicro"))
            .args(["demo", "--in", fixture.to_str().unwrap()])
            .env("FLMICRO_THREADS", v)
            .output()
            .unwrap()
            .status
            .code()
    };
    assert_eq!(run("1"), Some(0));
    assert_eq!(run("zero"), Some(2));
}
