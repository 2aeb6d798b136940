// SPDX-License-Identifier: Apache-2.0

//! Trace, report and curve file formats.

use std::io::{self, Write};

use serde::Serialize;
use swinglink_core::energy::{bw_max, energy_per_bit, Accounting, DutyCycleParams, EnergyError, PowerProfile, PERIPHERALS};
use swinglink_core::link::SimReport;
use swinglink_core::time::Femtos;
use swinglink_core::trace::{Domain, TraceRecord};
use thiserror::Error;

/// Writes records as `time_fs<TAB>domain<TAB>event<TAB>payload`, ordered by
/// time. Records with equal times keep their emission order.
pub fn write_trace<W: Write>(mut out: W, records: &[TraceRecord]) -> io::Result<()> {
    let mut order: Vec<&TraceRecord> = records.iter().collect();
    order.sort_by_key(|r| r.time);
    for r in order {
        writeln!(out, "{r}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceLine {
    pub time: Femtos,
    pub domain: Domain,
    pub event: String,
    pub payload: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("trace line {line}: {reason}")]
pub struct TraceParseError {
    pub line: usize,
    pub reason: &'static str,
}

pub fn parse_trace_line(text: &str, line: usize) -> Result<TraceLine, TraceParseError> {
    let err = |reason| TraceParseError { line, reason };
    let mut fields = text.splitn(4, '\t');
    let time = fields.next().ok_or(err("empty line"))?.parse().map_err(|_| err("bad time"))?;
    let domain = Domain::parse(fields.next().ok_or(err("missing domain"))?).ok_or(err("unknown domain"))?;
    let event = fields.next().ok_or(err("missing event"))?;
    if event.is_empty() || !event.bytes().all(|b| b.is_ascii_lowercase() || b == b'_') {
        return Err(err("bad event name"));
    }
    let payload = fields.next().ok_or(err("missing payload"))?;
    Ok(TraceLine { time, domain, event: event.to_string(), payload: payload.to_string() })
}

pub fn parse_trace(text: &str) -> Result<Vec<TraceLine>, TraceParseError> {
    text.lines().enumerate().map(|(i, l)| parse_trace_line(l, i + 1)).collect()
}

#[derive(Debug, Serialize)]
struct ReportRow<'a> {
    payload_out_bytes: usize,
    bit_errors: u64,
    corrupt_words: u64,
    idle_fs: Femtos,
    warm_up_fs: Femtos,
    data_comm_fs: Femtos,
    total_fs: Femtos,
    duty_cycles: u64,
    cycles_completed: u64,
    effective_bandwidth_bps: f64,
    energy_j: f64,
    accounting: &'a str,
    padding_bytes: usize,
    bytes_popped: u64,
    bytes_landed: u64,
    words_lost: u64,
    frames_missed: u64,
    missing_stops: u64,
    lock_failures: u64,
    protocol_violations: usize,
    metastable_samples: u64,
    exit_code: i32,
}

pub fn write_report<W: Write>(out: W, r: &SimReport, accounting: Accounting) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.serialize(ReportRow {
        payload_out_bytes: r.payload_out.len(),
        bit_errors: r.bit_errors,
        corrupt_words: r.corrupt_words,
        idle_fs: r.durations.idle,
        warm_up_fs: r.durations.warm_up,
        data_comm_fs: r.durations.data_comm,
        total_fs: r.total_time,
        duty_cycles: r.duty_cycles,
        cycles_completed: r.cycles_completed,
        effective_bandwidth_bps: r.effective_bandwidth_bps,
        energy_j: r.energy_j,
        accounting: accounting.as_str(),
        padding_bytes: r.padding_bytes,
        bytes_popped: r.bytes_popped,
        bytes_landed: r.bytes_landed,
        words_lost: r.words_lost,
        frames_missed: r.frames_missed(),
        missing_stops: r.missing_stops,
        lock_failures: r.lock_failures,
        protocol_violations: r.protocol_violations.len(),
        metastable_samples: r.metastable_samples,
        exit_code: r.exit_code(),
    })?;
    w.flush()?;
    Ok(())
}

pub const ENERGY_HEADER: [&str; 8] =
    ["bandwidth_mbps", "serdes", "spi_single", "quad_sdr", "quad_ddr", "octal_sdr", "octal_ddr", "hyperbus"];

/// One row per bandwidth, in pJ/bit. Cells outside a curve's tabulated range
/// are empty; SerDes points above its maximum bandwidth read `infeasible`.
pub fn write_energy_curve<W: Write>(
    out: W,
    bandwidths_mbps: &[f64],
    p: &PowerProfile,
    d: &DutyCycleParams,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ENERGY_HEADER)?;
    for &bw in bandwidths_mbps {
        let mut row = vec![format!("{bw}")];
        row.push(match energy_per_bit(bw * 1e6, p, d) {
            Ok(e) => format!("{:.6}", e * 1e12),
            Err(EnergyError::Infeasible { .. }) => "infeasible".into(),
            Err(EnergyError::NonPositiveBandwidth(_)) => String::new(),
        });
        for c in PERIPHERALS {
            row.push(c.interpolate(bw).map(|v| format!("{v:.6}")).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_sweep(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Reported bandwidth ceiling in Mbps, for messages.
pub fn bw_max_mbps(p: &PowerProfile, d: &DutyCycleParams) -> f64 {
    bw_max(p, d) / 1e6
}

pub fn write_rows<W: Write, T: Serialize>(out: W, rows: &[T]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_round_trip() {
        let recs = vec![
            TraceRecord { time: 50, domain: Domain::Rx, event: "word", payload: "DEADBEEF".into() },
            TraceRecord { time: 10, domain: Domain::Gpio, event: "warmup_req", payload: "1".into() },
            TraceRecord { time: 50, domain: Domain::Cdr, event: "window", payload: String::new() },
        ];
        let mut buf = Vec::new();
        write_trace(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let parsed = parse_trace(&text).unwrap();
        assert_eq!(parsed.iter().map(|l| l.time).collect::<Vec<_>>(), [10, 50, 50]);
        assert_eq!(parsed[1].event, "word");
        assert_eq!(parsed[2].payload, "");
    }

    #[test]
    fn malformed_trace_lines() {
        assert!(parse_trace_line("x\tTX\tdata\t", 1).is_err());
        assert!(parse_trace_line("1\tXX\tdata\t", 1).is_err());
        assert!(parse_trace_line("1\tTX\tdata", 1).is_err());
        assert!(parse_trace_line("1\tTX\tData\t", 1).is_err());
    }

    #[test]
    fn energy_csv_cells() {
        let mut buf = Vec::new();
        write_energy_curve(&mut buf, &[100.0, 800.0], &PowerProfile::default(), &DutyCycleParams::default()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], ENERGY_HEADER.join(","));
        assert!(lines[1].starts_with("100,5.705"));
        // SPI stops at 50 Mbps.
        assert_eq!(lines[1].split(',').nth(2), Some(""));
        assert!(lines[2].starts_with("800,infeasible,"));
    }

    #[test]
    fn sweep_endpoints() {
        let s = log_sweep(0.1, 787.0, 5);
        assert_eq!(s.len(), 5);
        assert!((s[0] - 0.1).abs() < 1e-12 && (s[4] - 787.0).abs() < 1e-9);
    }
}
