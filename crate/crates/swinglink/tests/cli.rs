// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use swinglink::io::parse_trace;

const BIN: &str = env!("CARGO_BIN_EXE_swinglink");

const SCENARIO: &str = r#"
payload = "random"
payload_seed = 1
payload_bytes = 16384
phase_offset_ui = 0.0
jitter_sigma_ui = 0.0
freq_offset_ppm = 0
metastability_window_fs = 0
divider_n = 4
rx_buffer_bytes = 16384
fixed_wait_cycles = 1024
fifo_depth = 8
"#;

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env("SWINGLINK_THREADS", "2").output().expect("binary runs")
}

fn write_scenario(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn column(csv: &str, name: &str) -> String {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == name).unwrap();
    row[i].to_string()
}

#[test]
fn ideal_transfer_exits_zero_and_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_scenario(dir.path(), "ideal.toml", SCENARIO);
    let out = dir.path().join("out");
    let o = run(&["transfer", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(column(&report, "bit_errors"), "0");
    assert_eq!(column(&report, "exit_code"), "0");
    let trace = fs::read_to_string(out.join("trace.tsv")).unwrap();
    let lines = parse_trace(&trace).unwrap();
    assert!(lines.windows(2).all(|w| w[0].time <= w[1].time));
    assert!(lines.iter().any(|l| l.event == "detect_stop"));
}

#[test]
fn heavy_jitter_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_scenario(
        dir.path(),
        "jitter.toml",
        &SCENARIO.replace("jitter_sigma_ui = 0.0", "jitter_sigma_ui = 0.3").replace("metastability_window_fs = 0", "metastability_window_fs = 10000"),
    );
    let o = run(&["transfer", "--config", &cfg, "--seed", "3"]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    let report = String::from_utf8(o.stdout).unwrap();
    assert!(column(&report, "bit_errors").parse::<u64>().unwrap() > 0);
}

#[test]
fn missing_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_scenario(dir.path(), "bad.toml", &SCENARIO.replace("divider_n = 4\n", ""));
    let o = run(&["transfer", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(64));
    assert!(String::from_utf8_lossy(&o.stderr).contains("divider_n"));

    let o = run(&["transfer", "--config", dir.path().join("absent.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(64));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(64));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn energy_curve_points() {
    let o = run(&["energy-curve", "--bw", "100,800"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0][0], "bandwidth_mbps");
    let pj: f64 = rows[1][1].parse().unwrap();
    assert!((pj - 5.7056).abs() < 5e-5, "{pj}");
    assert_eq!(rows[2][1], "infeasible");
}

#[test]
fn default_curve_matches_published_points() {
    let o = run(&["energy-curve"]);
    let text = String::from_utf8(o.stdout).unwrap();
    let published = [(0.1, 336.3745801), (3.0, 16.40791341), (50.0, 6.036580078), (787.0, 5.416638528)];
    let rows: Vec<(f64, f64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 27);
    for (bw, want) in published {
        let got = rows.iter().find(|r| r.0 == bw).unwrap().1;
        // Four significant digits.
        assert!(((got - want) / want).abs() < 5e-5, "{bw}: {got}");
    }
    let sweep = run(&["energy-curve", "--sweep", "0.1:787:9"]);
    assert_eq!(String::from_utf8(sweep.stdout).unwrap().lines().count(), 10);
}

#[test]
fn selftest_passes_and_is_deterministic() {
    let a = run(&["selftest"]);
    let b = run(&["selftest"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(String::from_utf8(a.stdout).unwrap().lines().filter(|l| l.starts_with("PASS")).count(), 3);
}

#[test]
fn lock_sweep_outputs_are_thread_count_independent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_scenario(dir.path(), "s.toml", SCENARIO);
    let mut outs = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(threads);
        let o = Command::new(BIN)
            .args(["cdr-lock", "--config", &cfg, "--out", out.to_str().unwrap()])
            .env("SWINGLINK_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0));
        outs.push((fs::read(out.join("cdr_lock.csv")).unwrap(), fs::read(out.join("cdr_lock_curve.csv")).unwrap()));
    }
    assert_eq!(outs[0], outs[1]);
    let summary = String::from_utf8(outs[0].0.clone()).unwrap();
    assert_eq!(summary.lines().filter(|l| l.contains(",true,")).count(), 32);
}

#[test]
fn ber_sweep_rows_in_input_order() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_scenario(dir.path(), "s.toml", &format!("{SCENARIO}ber_bits = 20000\n"));
    let o = run(&["ber-sweep", "--config", &cfg, "--sigma", "0.2,0,0.1"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    let sigmas: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(sigmas, ["0.2", "0.0", "0.1"]);
}

#[test]
fn compare_reports_ratios() {
    let o = run(&["compare", "--bw", "50"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    let spi = text.lines().find(|l| l.starts_with("spi_single")).unwrap();
    let ratio: f64 = spi.split(',').nth(4).unwrap().parse().unwrap();
    assert!((ratio - 10.2).abs() < 0.2, "{ratio}");
}
