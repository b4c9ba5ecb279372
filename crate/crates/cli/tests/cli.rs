//! Command-line behavior: exit codes, file outputs, and schema stability.

use std::path::Path;
use std::process::{Command, Output};

use reram_model::io;
use reram_model::ProtocolKind;

fn reram(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reram"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn reram")
}

#[test]
fn unknown_flag_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = reram(dir.path(), &["sweep", "--bogus-flag", "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unreadable_file_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = reram(
        dir.path(),
        &[
            "analyze",
            "--log",
            "missing.csv",
            "--mode",
            "sweeper",
            "--out",
            "r.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn schema_violation_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.csv"), "not,a,log\n1,2,3\n").unwrap();
    let out = reram(
        dir.path(),
        &[
            "analyze", "--log", "bad.csv", "--mode", "sweeper", "--out", "r.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(4));

    // a params file with an unknown key is a schema violation too
    std::fs::write(dir.path().join("p.txt"), "A_p = 1\nwhatever = 2\n").unwrap();
    std::fs::write(dir.path().join("w.csv"), "amplitude_V,width_s\n").unwrap();
    let out = reram(
        dir.path(),
        &[
            "simulate",
            "--params",
            "p.txt",
            "--waveform",
            "w.csv",
            "--out",
            "t.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn stage_failure_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    // a sweeper log with a single train cannot support the fit
    let sweep = reram(
        dir.path(),
        &[
            "sweep",
            "--v-start",
            "0.8",
            "--v-stop",
            "0.8",
            "--pulses",
            "50",
            "--out",
            "s.csv",
        ],
    );
    assert!(sweep.status.success());
    let opt = reram(
        dir.path(),
        &[
            "optimize",
            "--target",
            "13650",
            "--max-trains",
            "50",
            "--out",
            "o.csv",
        ],
    );
    assert!(opt.status.success());
    let out = reram(
        dir.path(),
        &[
            "fit",
            "--sweeper-log",
            "s.csv",
            "--optimizer-log",
            "o.csv",
            "--params-out",
            "p.txt",
            "--report-out",
            "rep.txt",
        ],
    );
    assert_eq!(out.status.code(), Some(5));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("threshold-line"),
        "stage named in diagnostics: {stderr}"
    );
    // the report is still written for inspection
    assert!(dir.path().join("rep.txt").exists());
}

#[test]
fn empty_waveform_yields_single_point_trace() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("w.csv"), "amplitude_V,width_s\n").unwrap();
    let out = reram(
        dir.path(),
        &[
            "simulate",
            "--waveform",
            "w.csv",
            "--r0",
            "12600",
            "--out",
            "t.csv",
        ],
    );
    assert!(out.status.success());
    let trace = io::csv::read_trace::<f64>(&dir.path().join("t.csv")).unwrap();
    assert_eq!(trace.len(), 1);
    assert_eq!(trace[0].resistance, 12_600.0);
    assert!(dir.path().join("t.csv.manifest").exists());
}

#[test]
fn sweep_defaults_produce_six_trains_and_parse_back() {
    let dir = tempfile::tempdir().unwrap();
    let out = reram(dir.path(), &["sweep", "--pulses", "25", "--out", "s.csv"]);
    assert!(out.status.success());
    let log = io::csv::read_log::<f64>(&dir.path().join("s.csv"), ProtocolKind::Sweeper).unwrap();
    let trains: std::collections::BTreeSet<usize> = log.records.iter().map(|r| r.train).collect();
    assert_eq!(trains.len(), 6);
    assert!(dir.path().join("s.csv.config").exists());
    assert!(dir.path().join("s.csv.manifest").exists());
}

#[test]
fn surface_grid_shape_and_readback() {
    let dir = tempfile::tempdir().unwrap();
    let out = reram(
        dir.path(),
        &[
            "surface",
            "--r-min",
            "10000",
            "--r-max",
            "18000",
            "--r-count",
            "3",
            "--v-min",
            "-0.8",
            "--v-max",
            "0.8",
            "--v-count",
            "3",
            "--out",
            "g.csv",
        ],
    );
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("g.csv")).unwrap();
    assert_eq!(text.lines().count(), 10); // header + 9 cells
    let points = io::csv::read_rates::<f64>(&dir.path().join("g.csv")).unwrap();
    assert_eq!(points.len(), 9);
    // every cell equals the model evaluation, zero-rate cells included
    let params = reram_model::ModelParams64::preset();
    for p in &points {
        let expect = params
            .switching_rate_exact(p.resistance, p.voltage)
            .unwrap();
        assert_eq!(p.rate, expect);
    }
    // gate geometry: positive bias cannot switch above its boundary
    assert!(points
        .iter()
        .filter(|p| p.voltage > 0.0 && p.resistance > 17_280.0)
        .all(|p| p.rate == 0.0));

    // inverted ranges are a usage/schema error
    let bad = reram(
        dir.path(),
        &[
            "surface",
            "--r-min",
            "18000",
            "--r-max",
            "10000",
            "--r-count",
            "3",
            "--v-min",
            "-0.8",
            "--v-max",
            "0.8",
            "--v-count",
            "3",
            "--out",
            "g2.csv",
        ],
    );
    assert_eq!(bad.status.code(), Some(4));
}

#[test]
fn analyze_exclude_voltage_filters_trains() {
    let dir = tempfile::tempdir().unwrap();
    assert!(
        reram(dir.path(), &["sweep", "--pulses", "30", "--out", "s.csv"])
            .status
            .success()
    );
    let all = reram(
        dir.path(),
        &[
            "analyze", "--log", "s.csv", "--mode", "sweeper", "--out", "a.csv",
        ],
    );
    assert!(all.status.success());
    let filtered = reram(
        dir.path(),
        &[
            "analyze",
            "--log",
            "s.csv",
            "--mode",
            "sweeper",
            "--exclude-voltage",
            "0.6",
            "--out",
            "b.csv",
        ],
    );
    assert!(filtered.status.success());
    let a = io::csv::read_rates::<f64>(&dir.path().join("a.csv")).unwrap();
    let b = io::csv::read_rates::<f64>(&dir.path().join("b.csv")).unwrap();
    assert!(a.iter().any(|p| p.voltage == 0.6));
    assert!(b.iter().all(|p| p.voltage != 0.6));
    assert!(b.iter().any(|p| p.voltage == -0.6)); // signed filter
}

#[test]
fn fit_writes_a_parameter_file_within_round_trip_tolerances() {
    let dir = tempfile::tempdir().unwrap();
    assert!(reram(dir.path(), &["sweep", "--out", "s.csv"])
        .status
        .success());
    assert!(reram(
        dir.path(),
        &["optimize", "--target", "13650", "--out", "o.csv"]
    )
    .status
    .success());
    let out = reram(
        dir.path(),
        &[
            "fit",
            "--sweeper-log",
            "s.csv",
            "--optimizer-log",
            "o.csv",
            "--params-out",
            "p.txt",
            "--report-out",
            "rep.txt",
        ],
    );
    assert!(out.status.success());
    let (fitted, _) = io::params::read::<f64>(&dir.path().join("p.txt")).unwrap();
    let truth = reram_model::ModelParams64::preset();
    let rel = |a: f64, b: f64| ((a - b) / b).abs();
    assert!(rel(fitted.a0, truth.a0) < 0.02);
    assert!(rel(fitted.b0, truth.b0) < 0.02);
    assert!(rel(fitted.b1, truth.b1) < 0.05);
    assert!((fitted.a1 - truth.a1).abs() < 50.0);
    assert!(rel(fitted.a_p, truth.a_p) < 0.10);
    assert!(rel(fitted.t_p, truth.t_p) < 0.10);
    assert!(rel(fitted.a_n, truth.a_n) < 0.10);
    assert!(rel(fitted.t_n, truth.t_n) < 0.10);
    // the fitted file drives the emitter directly
    let emit = reram(
        dir.path(),
        &[
            "emit-va", "--params", "p.txt", "--r-init", "13650", "--out", "m.va",
        ],
    );
    assert!(emit.status.success());
}
