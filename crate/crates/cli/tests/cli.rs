use std::path::PathBuf;
use std::process::{Command, Output};

fn eq(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../equations")
        .join(format!("{name}.eq"))
        .display()
        .to_string()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_formsym")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn parse_prints_the_equation() {
    let out = run(&["parse", &eq("exp")]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("x(n+1)"));
}

#[test]
fn missing_file_is_a_failure() {
    let out = run(&["parse", "no/such/file.eq"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_subcommand_is_usage() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn simulate_reports_period() {
    let out = run(&["simulate", &eq("hd0"), "--init", "1,2", "--steps", "60"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stderr(&out).contains("period 6"), "{}", stderr(&out));
    assert_eq!(stdout(&out).lines().count() - 1, 62);
}

#[test]
fn simulate_rejects_wrong_init_length() {
    let out = run(&["simulate", &eq("exp"), "--init", "2.3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("expected 2 initial values"));
}

#[test]
fn factor_reports_constant_and_factor() {
    let out = run(&["factor", &eq("exp")]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("c = -1"), "{text}");
    assert!(text.contains("r(n+1) = exp(a)/r(n)"), "{text}");
}

#[test]
fn factor_without_symmetry_fails() {
    let out = run(&["factor", &eq("nonred")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("no form symmetry"));
}

#[test]
fn verify_passes_and_detects_bad_constant() {
    let ok = run(&["verify", &eq("hs"), "--steps", "60", "--trials", "10", "--seed", "7"]);
    assert_eq!(ok.status.code(), Some(0), "{}", stderr(&ok));
    assert!(stdout(&ok).trim_end().ends_with("PASS"));
    let bad = run(&["verify", &eq("exp"), "--constant", "0.5,0"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn solve_linear_agrees_with_closed_form() {
    let out = run(&["solve-linear", &eq("lin_32"), "--init", "0,1", "--n", "10"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("closed form: x(10) = 2047"), "{text}");
    assert!(text.contains("cascade:     x(10) = 2047"), "{text}");
}

#[test]
fn solve_linear_rejects_nonlinear() {
    let out = run(&["solve-linear", &eq("exp"), "--init", "1,1", "--n", "3"]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn bifurcate_rejects_unknown_coordinate() {
    let out = run(&["bifurcate", &eq("exp"), "--fix", "x-1=2.3", "--sweep", "x7=2.3:4.8:10"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bifurcate_csv_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for path in [&a, &b] {
        let out = run(&[
            "bifurcate",
            &eq("exp"),
            "--fix",
            "x-1=2.3",
            "--sweep",
            "x0=2.3:4.8:120",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        assert!(stdout(&out).contains("period 2"));
    }
    let first = std::fs::read(&a).unwrap();
    assert_eq!(first, std::fs::read(&b).unwrap());
    assert!(String::from_utf8(first).unwrap().starts_with("param,sample\n"));
}
