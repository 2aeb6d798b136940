// SPDX-License-Identifier: Apache-2.0

//! Command-line front end.
//!
//! Exit codes: 0 success, 1 bit errors or a failed self-test, 2 protocol or
//! lock failure, 64 usage or configuration error, 74 output error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use swinglink_core::energy::{
    bw_max, compare, Accounting, DutyCycleParams, PowerProfile, PERIPHERALS, SERDES_REFERENCE,
};
use swinglink_core::link::run_transfer;
use swinglink_core::trace::TraceRecord;

use crate::config::{ConfigError, Scenario};
use crate::{io as fmt, selftest, sweep};

pub const EXIT_USAGE: i32 = 64;
pub const EXIT_IO: i32 = 74;

#[derive(Debug, Parser)]
#[command(name = "swinglink", version, about = "Low-swing SerDes link simulator and energy model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AccountingArg {
    Line,
    Goodput,
}

impl From<AccountingArg> for Accounting {
    fn from(a: AccountingArg) -> Self {
        match a {
            AccountingArg::Line => Accounting::Line,
            AccountingArg::Goodput => Accounting::Goodput,
        }
    }
}

#[derive(Debug, Args)]
struct Common {
    /// Output directory; results go to stdout when omitted.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    /// Scenario file (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Overrides the scenario's channel seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one end-to-end transfer; writes report.csv and trace.tsv.
    Transfer {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_enum)]
        accounting: Option<AccountingArg>,
        #[command(flatten)]
        common: Common,
    },
    /// Bit error rate against jitter; writes ber.csv.
    BerSweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Jitter sigmas in UI, overriding the scenario list.
        #[arg(long, value_delimiter = ',')]
        sigma: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Lock from all 32 PI codes; writes cdr_lock.csv and cdr_lock_curve.csv.
    CdrLock {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Cycle budget, overriding the scenario's lock_budget_cycles.
        #[arg(long)]
        budget: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Energy per bit against bandwidth for every peripheral; writes energy_curve.csv.
    EnergyCurve {
        /// Bandwidths in Mbps.
        #[arg(long, value_delimiter = ',', conflicts_with = "sweep", value_parser = positive)]
        bw: Vec<f64>,
        /// Log sweep `LO:HI:N` in Mbps.
        #[arg(long, value_parser = parse_sweep)]
        sweep: Option<(f64, f64, usize)>,
        #[arg(long, value_enum, default_value = "line")]
        accounting: AccountingArg,
        #[command(flatten)]
        common: Common,
    },
    /// Every peripheral at one bandwidth against the SerDes; writes compare.csv.
    Compare {
        /// Peripheral bandwidth in Mbps.
        #[arg(long, value_parser = positive)]
        bw: f64,
        /// SerDes bandwidth in Mbps; defaults to its maximum.
        #[arg(long, value_parser = positive)]
        serdes_bw: Option<f64>,
        #[arg(long, value_enum, default_value = "line")]
        accounting: AccountingArg,
        #[command(flatten)]
        common: Common,
    },
    /// Built-in checks of the codec, detector and energy model.
    Selftest,
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("{s:?} is not a positive number")),
    }
}

fn parse_sweep(s: &str) -> Result<(f64, f64, usize), String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, n] = parts[..] else {
        return Err("expected LO:HI:N".into());
    };
    let (lo, hi) = (positive(lo)?, positive(hi)?);
    let n = n.parse::<usize>().map_err(|_| format!("{n:?} is not a point count"))?;
    if lo > hi || n == 0 {
        return Err("need LO <= HI and N >= 1".into());
    }
    Ok((lo, hi, n))
}

/// A failure that ends the run with a specific exit code.
struct Fail(i32, String);

impl From<ConfigError> for Fail {
    fn from(e: ConfigError) -> Self {
        Fail(EXIT_USAGE, format!("config error: {e}"))
    }
}

impl From<io::Error> for Fail {
    fn from(e: io::Error) -> Self {
        Fail(EXIT_IO, format!("write error: {e}"))
    }
}

impl From<csv::Error> for Fail {
    fn from(e: csv::Error) -> Self {
        Fail(EXIT_IO, format!("write error: {e}"))
    }
}

impl From<swinglink_core::link::LinkError> for Fail {
    fn from(e: swinglink_core::link::LinkError) -> Self {
        Fail(EXIT_USAGE, format!("invalid scenario: {e}"))
    }
}

fn load(a: &ScenarioArgs) -> Result<Scenario, Fail> {
    let mut s = Scenario::load(&a.config)?;
    if let Some(seed) = a.seed {
        s.seed = seed;
    }
    Ok(s)
}

/// Runs `f` against `DIR/name` when an output directory is set, stdout
/// otherwise.
fn emit<F>(out: &Option<PathBuf>, name: &str, stdout: &mut dyn Write, f: F) -> Result<(), Fail>
where
    F: FnOnce(&mut dyn Write) -> Result<(), Fail>,
{
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let mut w = BufWriter::new(File::create(dir.join(name))?);
            f(&mut w)?;
            w.flush()?;
            Ok(())
        }
        None => f(stdout),
    }
}

fn energy_params(a: AccountingArg) -> DutyCycleParams {
    DutyCycleParams { accounting: a.into(), ..DutyCycleParams::default() }
}

fn dispatch(cmd: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, Fail> {
    match cmd {
        Command::Transfer { scenario, accounting, common } => {
            let mut s = load(&scenario)?;
            if let Some(a) = accounting {
                s.link.accounting = a.into();
            }
            let payload = s.payload_bytes()?;
            let mut trace: Vec<TraceRecord> = Vec::new();
            let report = run_transfer(&payload, &s.link, s.seed, &mut trace)?;
            emit(&common.out, "report.csv", stdout, |w| Ok(fmt::write_report(w, &report, s.link.accounting)?))?;
            if let Some(dir) = &common.out {
                let mut w = BufWriter::new(File::create(dir.join("trace.tsv"))?);
                fmt::write_trace(&mut w, &trace)?;
                w.flush()?;
            }
            if report.exit_code() != 0 {
                writeln!(
                    stderr,
                    "{} bit errors, {} corrupt words, {} frames missed, {} lock failures, {} protocol violations",
                    report.bit_errors,
                    report.corrupt_words,
                    report.frames_missed(),
                    report.lock_failures,
                    report.protocol_violations.len()
                )?;
            }
            Ok(report.exit_code())
        }
        Command::BerSweep { scenario, sigma, common } => {
            let s = load(&scenario)?;
            let sigmas = if sigma.is_empty() { s.sweep_jitter_sigma_ui.clone() } else { sigma };
            let rows = sweep::ber_sweep(&s, &sigmas)?;
            emit(&common.out, "ber.csv", stdout, |w| Ok(fmt::write_rows(w, &rows)?))?;
            Ok(0)
        }
        Command::CdrLock { scenario, budget, common } => {
            let s = load(&scenario)?;
            let (summary, curve) = sweep::cdr_lock_sweep(&s, budget.unwrap_or(s.lock_budget_cycles))?;
            emit(&common.out, "cdr_lock.csv", stdout, |w| Ok(fmt::write_rows(w, &summary)?))?;
            if let Some(dir) = &common.out {
                fmt::write_rows(BufWriter::new(File::create(dir.join("cdr_lock_curve.csv"))?), &curve)?;
            }
            Ok(0)
        }
        Command::EnergyCurve { bw, sweep, accounting, common } => {
            let bws = match (sweep, bw.is_empty()) {
                (Some((lo, hi, n)), _) => fmt::log_sweep(lo, hi, n),
                (None, false) => bw,
                (None, true) => SERDES_REFERENCE.iter().map(|&(b, _)| b).collect(),
            };
            let d = energy_params(accounting);
            let p = PowerProfile::default();
            emit(&common.out, "energy_curve.csv", stdout, |w| Ok(fmt::write_energy_curve(w, &bws, &p, &d)?))?;
            Ok(0)
        }
        Command::Compare { bw, serdes_bw, accounting, common } => {
            let d = energy_params(accounting);
            let p = PowerProfile::default();
            let serdes_bps = serdes_bw.map_or_else(|| bw_max(&p, &d), |m| m * 1e6);
            let rows = compare(bw * 1e6, serdes_bps, &PERIPHERALS, &p, &d)
                .map_err(|e| Fail(EXIT_USAGE, format!("invalid SerDes bandwidth: {e}")))?;
            let rows: Vec<CompareRow> = rows
                .iter()
                .map(|r| CompareRow {
                    peripheral: r.name,
                    bandwidth_mbps: bw,
                    serdes_bandwidth_mbps: serdes_bps / 1e6,
                    pj_per_bit: r.pj_per_bit,
                    ratio_vs_serdes: r.ratio_vs_serdes,
                    pads: r.pads,
                })
                .collect();
            emit(&common.out, "compare.csv", stdout, |w| Ok(fmt::write_rows(w, &rows)?))?;
            Ok(0)
        }
        Command::Selftest => {
            let checks = selftest::run(&PowerProfile::default());
            Ok(report_checks(&checks, stdout)?)
        }
    }
}

#[derive(serde::Serialize)]
struct CompareRow {
    peripheral: &'static str,
    bandwidth_mbps: f64,
    serdes_bandwidth_mbps: f64,
    pj_per_bit: Option<f64>,
    ratio_vs_serdes: Option<f64>,
    pads: u32,
}

/// Prints one line per check; returns 1 when any failed.
pub fn report_checks(checks: &[selftest::Check], out: &mut dyn Write) -> io::Result<i32> {
    for c in checks {
        writeln!(out, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
    }
    Ok(if checks.iter().all(|c| c.passed) { 0 } else { 1 })
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(stdout, "{text}");
                0
            };
        }
    };
    match dispatch(cli.command, stdout, stderr) {
        Ok(code) => code,
        Err(Fail(code, msg)) => {
            let _ = writeln!(stderr, "swinglink: {msg}");
            code
        }
    }
}

