//! End-to-end tests of the binary: exit codes, stdout/stderr contracts and
//! trace determinism.

use std::path::Path;
use std::process::{Command, Output};

const COMPLEX_NET: &str = "1I2(A9I10(C11,B14I13C)12I15C16I)2C3I4C5(I17(C18,A20B)19I20A)5I6C7I8";

fn hfpn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hfpn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, content: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, content).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn parse_lists_the_complex_net() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(
        dir.path(),
        "complex.pnf",
        &format!("# complex net\n{COMPLEX_NET}\n"),
    );
    let out = hfpn(&["parse", &file]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("nodes: 20, arcs: 22"), "{stdout}");
    assert!(stdout.contains("canonical: "));
    assert!(stdout.contains("place p2"));
    assert!(stdout.contains("transition t19"));
}

#[test]
fn parse_of_an_empty_file_is_the_empty_net() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "empty.pnf", "");
    let out = hfpn(&["parse", &file]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("nodes: 0, arcs: 0"));
}

#[test]
fn dangling_unit_completes_with_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "dangling.pnf", "1I2C\n");
    let out = hfpn(&["parse", &file]);
    assert!(out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("warning"), "{stderr}");
    assert!(stderr.contains("fresh id"), "{stderr}");
}

#[test]
fn parse_errors_exit_one_with_offsets() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "bad.pnf", "1I2X\n");
    let out = hfpn(&["parse", &file]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("bad.pnf:3:"), "{stderr}");
    assert!(out.stdout.is_empty());
}

#[test]
fn defuse_lists_one_unit_per_arc() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "fused.pnf", "(1A,2B)3I4\n");
    let out = hfpn(&["defuse", &file]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines, vec!["1A3", "2B3", "3I4"]);

    let file = write(dir.path(), "complex.pnf", COMPLEX_NET);
    let out = hfpn(&["defuse", &file]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 22);
}

#[test]
fn defuse_of_the_empty_net_prints_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "empty.pnf", "# nothing\n");
    let out = hfpn(&["defuse", &file]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
}

#[test]
fn emit_prints_the_canonical_formula() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "chain.pnf", "1I2C3\n");
    let out = hfpn(&["emit", &file]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "1I2C3");
}

const SCENARIO: &str = "\
[net]
1I2C3I4

[params]
p2.m=6
t1.v=0.2
t3.v=0.5

[gadgets]
rm name=r target=2
em name=e target=2 rate=5

[solver]
setpoint=6 gain=0.4 receptor=r effector=e

[run]
steps=40 dt=1

[events]
at 10 set p2.m=2
";

#[test]
fn run_writes_a_deterministic_trace_and_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "loop.scn", SCENARIO);
    let trace_a = dir.path().join("a.csv");
    let trace_b = dir.path().join("b.csv");

    let out = hfpn(&["run", &file, "--trace", trace_a.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("trace written to"));
    assert!(stdout.contains("final "));
    assert!(stdout.contains("range "));

    let out = hfpn(&["run", &file, "--trace", trace_b.to_str().unwrap()]);
    assert!(out.status.success());

    let a = std::fs::read(&trace_a).unwrap();
    let b = std::fs::read(&trace_b).unwrap();
    assert_eq!(a, b, "repeated runs produce identical bytes");

    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("step,time,"));
    assert_eq!(text.lines().count(), 42); // header + 41 rows
}

#[test]
fn run_honors_overrides_and_watch() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "loop.scn", SCENARIO);
    let trace = dir.path().join("t.csv");
    let out = hfpn(&[
        "run",
        &file,
        "--steps",
        "5",
        "--dt",
        "0.5",
        "--trace",
        trace.to_str().unwrap(),
        "--watch",
        "p2,t3_v",
    ]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let final_line = stdout.lines().find(|l| l.starts_with("final ")).unwrap();
    assert!(final_line.contains("p2="));
    assert!(final_line.contains("t3_v="));
    assert!(!final_line.contains("p4="));
    let text = std::fs::read_to_string(&trace).unwrap();
    assert_eq!(text.lines().count(), 7);
}

#[test]
fn invalid_scenarios_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(
        dir.path(),
        "bad.scn",
        "[net]\n1I2\n[params]\nt1.v=m(2)\n[run]\nsteps=1\n",
    );
    let out = hfpn(&["run", &file]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numeric_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(
        dir.path(),
        "div.scn",
        "[net]\n1{m=1}C2I3\n[params]\nt2.v=1/m(1)\n[run]\nsteps=5\n",
    );
    // m(1) reaches zero, the speed becomes infinite, the engine aborts.
    let out = hfpn(&["run", &file]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}
