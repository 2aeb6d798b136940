// SPDX-License-Identifier: Apache-2.0

//! Scenario files: a flat TOML table of `key = value` pairs.
//!
//! ```toml
//! payload = "random"          # or "hex:path/to/file.hex"
//! payload_seed = 7
//! payload_bytes = 16384
//! phase_offset_ui = 0.37
//! jitter_sigma_ui = 0.02
//! freq_offset_ppm = 0
//! metastability_window_fs = 10000
//! divider_n = 4
//! rx_buffer_bytes = 16384
//! fixed_wait_cycles = 1024
//! fifo_depth = 8
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;
use swinglink_core::channel::ChannelConfig;
use swinglink_core::energy::{Accounting, PowerProfile};
use swinglink_core::link::{random_payload, ChipConfig, LinkConfig, WarmMode};
use swinglink_core::time::{Femtos, UiFraction, FS_PER_US};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("bad value for `{key}`: {reason}")]
    Value { key: &'static str, reason: String },
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Raw {
    payload: Option<String>,
    payload_seed: Option<u64>,
    payload_bytes: Option<usize>,
    phase_offset_ui: Option<f64>,
    jitter_sigma_ui: Option<f64>,
    freq_offset_ppm: Option<f64>,
    metastability_window_fs: Option<i64>,
    divider_n: Option<u32>,
    rx_buffer_bytes: Option<usize>,
    fixed_wait_cycles: Option<u32>,
    fifo_depth: Option<usize>,

    seed: Option<u64>,
    gpio_delay_fs: Option<i64>,
    warm_mode: Option<String>,
    lock_budget_cycles: Option<u64>,
    cycle_period_us: Option<f64>,
    initial_pi_code: Option<u8>,
    analog_switch: Option<bool>,
    accounting: Option<String>,
    ber_bits: Option<u64>,
    sweep_jitter_sigma_ui: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PayloadSource {
    Random { seed: u64, bytes: usize },
    HexFile(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub payload: PayloadSource,
    pub link: LinkConfig,
    pub seed: u64,
    pub lock_budget_cycles: u64,
    pub ber_bits: u64,
    pub sweep_jitter_sigma_ui: Vec<f64>,
}

fn need<T>(v: Option<T>, key: &'static str) -> Result<T, ConfigError> {
    v.ok_or(ConfigError::Missing(key))
}

pub fn parse_accounting(s: &str) -> Option<Accounting> {
    match s {
        "line" => Some(Accounting::Line),
        "goodput" => Some(Accounting::Goodput),
        _ => None,
    }
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Parses scenario text; relative hex payload paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let raw: Raw = toml::from_str(text).map_err(|e| ConfigError::Parse(e.message().to_string()))?;

        let payload_spec = need(raw.payload, "payload")?;
        let payload = if payload_spec == "random" {
            PayloadSource::Random {
                seed: need(raw.payload_seed, "payload_seed")?,
                bytes: need(raw.payload_bytes, "payload_bytes")?,
            }
        } else if let Some(p) = payload_spec.strip_prefix("hex:") {
            PayloadSource::HexFile(base.join(p))
        } else {
            return Err(ConfigError::Value { key: "payload", reason: format!("expected \"random\" or \"hex:PATH\", got {payload_spec:?}") });
        };

        let ui = |key: &'static str, v: f64| -> Result<UiFraction, ConfigError> {
            if !v.is_finite() || v < 0.0 {
                return Err(ConfigError::Value { key, reason: format!("{v} is not a non-negative number of UI") });
            }
            Ok(UiFraction::from_ui(v))
        };
        let channel = ChannelConfig {
            phase_offset: ui("phase_offset_ui", need(raw.phase_offset_ui, "phase_offset_ui")?)?,
            jitter_sigma: ui("jitter_sigma_ui", need(raw.jitter_sigma_ui, "jitter_sigma_ui")?)?,
            freq_offset_ppb: ChannelConfig::ppm(need(raw.freq_offset_ppm, "freq_offset_ppm")?),
            metastability_window: need(raw.metastability_window_fs, "metastability_window_fs")?,
            seed: 0,
        };
        let divider_n = need(raw.divider_n, "divider_n")?;
        let chip = ChipConfig {
            rx_buffer_bytes: need(raw.rx_buffer_bytes, "rx_buffer_bytes")?,
            fixed_wait_cycles: need(raw.fixed_wait_cycles, "fixed_wait_cycles")?,
            fifo_depth: need(raw.fifo_depth, "fifo_depth")?,
            ..ChipConfig::default()
        };

        let lock_budget_cycles = raw.lock_budget_cycles.unwrap_or(1024);
        let warm_mode = match raw.warm_mode.as_deref().unwrap_or("fixed") {
            "fixed" => WarmMode::FixedWait,
            "lock" => WarmMode::LockCriterion { budget_cycles: lock_budget_cycles },
            other => {
                return Err(ConfigError::Value { key: "warm_mode", reason: format!("expected \"fixed\" or \"lock\", got {other:?}") })
            }
        };
        let accounting = match raw.accounting.as_deref() {
            None => Accounting::Line,
            Some(s) => parse_accounting(s).ok_or_else(|| ConfigError::Value {
                key: "accounting",
                reason: format!("expected \"line\" or \"goodput\", got {s:?}"),
            })?,
        };
        let cycle_period = match raw.cycle_period_us {
            None => None,
            Some(us) if us > 0.0 && us.is_finite() => Some((us * FS_PER_US as f64).round() as Femtos),
            Some(us) => return Err(ConfigError::Value { key: "cycle_period_us", reason: format!("{us} is not positive") }),
        };

        let link = LinkConfig {
            tx: chip,
            rx: chip,
            channel,
            divider_n,
            initial_pi_code: raw.initial_pi_code,
            gpio_delay: raw.gpio_delay_fs.unwrap_or(0),
            warm_mode,
            cycle_period,
            power: PowerProfile::default().with_analog_switch(raw.analog_switch.unwrap_or(true)),
            accounting,
            ..LinkConfig::default()
        };
        link.validate().map_err(|e| ConfigError::Value { key: "link", reason: e.to_string() })?;

        Ok(Scenario {
            payload,
            link,
            seed: raw.seed.unwrap_or(1),
            lock_budget_cycles,
            ber_bits: raw.ber_bits.unwrap_or(1_000_000),
            sweep_jitter_sigma_ui: raw.sweep_jitter_sigma_ui.unwrap_or_else(|| vec![0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3]),
        })
    }

    pub fn payload_bytes(&self) -> Result<Vec<u8>, ConfigError> {
        match &self.payload {
            PayloadSource::Random { seed, bytes } => Ok(random_payload(*bytes, *seed)),
            PayloadSource::HexFile(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.clone(), source })?;
                let digits: String = text.chars().filter(|c| !c.is_whitespace()).collect();
                hex::decode(digits).map_err(|e| ConfigError::Value { key: "payload", reason: e.to_string() })
            }
        }
    }
}
