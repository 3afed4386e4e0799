//! Black-box tests of the command-line interface: exit codes, CSV schema,
//! initial-condition overrides, and plot output.

use std::fs;
use std::path::PathBuf;
use std::process::Command;

fn gridflux() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gridflux"))
}

fn repo_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

#[test]
fn missing_file_exits_2() {
    let out = gridflux().args(["run", "missing.cir"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("cannot read"), "{err}");
}

#[test]
fn parse_error_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cir");
    fs::write(&bad, "a broken card\nR1 n1\n").unwrap();
    let out = gridflux().arg("run").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn unmatched_print_pattern_exits_2() {
    let out = gridflux()
        .arg("run")
        .arg(repo_path("netlists/fig1.cir"))
        .args(["--print", "V(nothing*)"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

/// The discharge example: DC gives a dead circuit, the override starts the
/// capacitor at 1 V, and backward Euler walks down the (1+h)^-n staircase.
#[test]
fn rc_discharge_example() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("rc.csv");
    let out = gridflux()
        .arg("run")
        .arg(repo_path("netlists/rc.cir"))
        .args(["--tstop", "1", "--step", "0.1", "--print", "V(2)", "--ic", "V(2)=1", "--out"])
        .arg(&csv)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "time,V(2)");
    assert_eq!(lines.len(), 12); // header + 11 rows
    let last: f64 = lines.last().unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((last - 0.38554).abs() < 1e-5, "final V(2) = {last}");

    // Timing line goes to the error stream.
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("wall clock"), "{err}");
}

#[test]
fn csv_to_stdout_without_out_flag() {
    let out = gridflux()
        .arg("run")
        .arg(repo_path("netlists/fig1.cir"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.starts_with("time,"), "{stdout}");
    // .PRINT directive selects the columns.
    assert!(stdout.lines().next().unwrap().contains("V(2)"));
}

#[test]
fn plot_file_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("w.csv");
    let svg = dir.path().join("w.svg");
    let out = gridflux()
        .arg("run")
        .arg(repo_path("netlists/hvdc_link.cir"))
        .args(["--tstop", "1"])
        .arg("--out")
        .arg(&csv)
        .arg("--plot")
        .arg(&svg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let content = fs::read_to_string(&svg).unwrap();
    assert!(content.starts_with("<svg"));
    assert!(content.contains("polyline"));
}

#[test]
fn scenario_file_overrides_are_honored() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("weak.toml");
    fs::write(&scenario, "load_p = 0.2\nload_q = 0.1\n").unwrap();
    let csv = dir.path().join("s.csv");
    let out = gridflux()
        .args(["run", "case4bus", "--tstop", "0.1", "--scenario"])
        .arg(&scenario)
        .args(["--print", "VM(bus3)", "--out"])
        .arg(&csv)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    let v3: f64 = text.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    // A light load leaves bus 3 higher than the published loading does.
    assert!(v3 > 0.99, "VM(bus3) = {v3}");

    // Unknown keys are rejected.
    fs::write(&scenario, "not_a_key = 1\n").unwrap();
    let out = gridflux()
        .args(["run", "case4bus", "--scenario"])
        .arg(&scenario)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solver_failure_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    // Two parallel ideal sources fighting over one node: singular system.
    let bad = dir.path().join("conflict.cir");
    fs::write(
        &bad,
        "a conflicted pair\nV1 n 0 1\nV2 n 0 2\n.TRAN 0.1 1\n.PRINT TRAN V(n)\n.END\n",
    )
    .unwrap();
    let out = gridflux().arg("run").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.to_lowercase().contains("singular") || err.contains("converge"), "{err}");
}
