// SPDX-License-Identifier: Apache-2.0

//! Event records emitted by the TX, RX, GPIO and CDR models.
//!
//! A record renders as one tab-separated line: `time_fs domain event payload`.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::time::Femtos;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    Tx,
    Rx,
    Gpio,
    Cdr,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Tx => "TX",
            Domain::Rx => "RX",
            Domain::Gpio => "GPIO",
            Domain::Cdr => "CDR",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "TX" => Domain::Tx,
            "RX" => Domain::Rx,
            "GPIO" => Domain::Gpio,
            "CDR" => Domain::Cdr,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub time: Femtos,
    pub domain: Domain,
    pub event: &'static str,
    pub payload: String,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}\t{}\t{}", self.time, self.domain.as_str(), self.event, self.payload)
    }
}

pub trait TraceSink {
    fn record(&mut self, record: TraceRecord);

    /// Lets producers skip formatting payloads nobody will read.
    fn enabled(&self) -> bool {
        true
    }
}

impl TraceSink for Vec<TraceRecord> {
    fn record(&mut self, record: TraceRecord) {
        self.push(record);
    }
}

/// Discards everything.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullSink;

impl TraceSink for NullSink {
    fn record(&mut self, _record: TraceRecord) {}

    fn enabled(&self) -> bool {
        false
    }
}

/// Event names used across the models.
pub mod event {
    pub const TRAINING: &str = "training";
    pub const START_FLIT: &str = "start_flit";
    pub const DATA: &str = "data";
    pub const STOP_FLIT: &str = "stop_flit";

    pub const DETECT_START: &str = "detect_start";
    pub const DETECT_STOP: &str = "detect_stop";
    pub const WORD: &str = "word";
    pub const CORRUPT: &str = "corrupt";
    pub const MISSING_STOP: &str = "missing_stop";
    pub const RX_MODE: &str = "mode";

    pub const WARMUP_REQ: &str = "warmup_req";
    pub const CLOCK_READY: &str = "clock_ready";
    pub const UDMA_CONFIG: &str = "udma_config";
    pub const COMM_READY: &str = "comm_ready";

    pub const WINDOW: &str = "window";
    pub const LOCK: &str = "lock";
    pub const LOCK_FAILURE: &str = "lock_failure";
}
