// SPDX-License-Identifier: Apache-2.0

//! Transmit side: flit construction, the TX controller and the DDR
//! serializer.

use alloc::format;

use crate::codec::{ByteSymbol, Disparity};
use crate::time::{ClockSpec, Femtos, CYCLES_PER_WORD};
use crate::trace::{Domain, TraceRecord, TraceSink};
use crate::waveform::{Level, Waveform};
use crate::word::{encode_data_word, encode_word, Word40, WordKind};

fn repeated(symbol: ByteSymbol, kind: WordKind, rd: Disparity) -> (Word40, Disparity) {
    let (word, rd) = encode_word([symbol; 4], rd).expect("fixed symbols are valid");
    (word.with_kind(kind), rd)
}

/// Frame header: K27.7 on all four lanes.
pub fn build_start_flit(rd: Disparity) -> (Word40, Disparity) {
    repeated(ByteSymbol::K27_7, WordKind::StartFlit, rd)
}

/// Frame footer: K29.7 on all four lanes.
pub fn build_stop_flit(rd: Disparity) -> (Word40, Disparity) {
    repeated(ByteSymbol::K29_7, WordKind::StopFlit, rd)
}

/// Warm-up word: D10.2 on all lanes, a pure 0101... line pattern.
pub fn build_training_word(rd: Disparity) -> (Word40, Disparity) {
    repeated(ByteSymbol::D10_2, WordKind::Training, rd)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TxMode {
    Idle,
    WarmUp,
    SendStart,
    DataComm,
    SendStop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TxState {
    pub mode: TxMode,
    pub cycle_in_word: u8,
    pub rd: Disparity,
}

impl Default for TxState {
    fn default() -> Self {
        TxState { mode: TxMode::Idle, cycle_in_word: 0, rd: Disparity::Negative }
    }
}

impl TxState {
    /// Advances one TX clock cycle; true when a new word slot begins.
    pub fn tick(&mut self) -> bool {
        self.cycle_in_word = (self.cycle_in_word + 1) % CYCLES_PER_WORD as u8;
        self.cycle_in_word == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TxConfig {
    pub comm_en: bool,
    pub warm_en: bool,
    pub clock: ClockSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TxOutput {
    pub word: Option<Word40>,
    pub fifo_pop: bool,
}

/// One word-slot step of the TX controller.
///
/// `fifo_head` is the FIFO output: `Some` means `Valid` is high with that
/// payload. The returned mode names the slot the emitted word belongs to.
pub fn tx_step(
    state: TxState,
    config: &TxConfig,
    fifo_head: Option<[u8; 4]>,
) -> (TxState, TxOutput) {
    let valid = fifo_head.is_some() && config.comm_en;
    let enabled = config.warm_en || config.comm_en;

    let (mode, word, pop) = match state.mode {
        TxMode::Idle | TxMode::SendStop if config.warm_en => {
            let (w, rd) = build_training_word(state.rd);
            (TxMode::WarmUp, Some((w, rd)), false)
        }
        TxMode::Idle | TxMode::SendStop => (TxMode::Idle, None, false),
        TxMode::WarmUp if valid => (TxMode::SendStart, Some(build_start_flit(state.rd)), false),
        TxMode::WarmUp if enabled => {
            (TxMode::WarmUp, Some(build_training_word(state.rd)), false)
        }
        TxMode::WarmUp => (TxMode::Idle, None, false),
        TxMode::SendStart | TxMode::DataComm => match fifo_head.filter(|_| config.comm_en) {
            Some(bytes) => (TxMode::DataComm, Some(encode_data_word(bytes, state.rd)), true),
            None => (TxMode::SendStop, Some(build_stop_flit(state.rd)), false),
        },
    };

    let (word, rd) = match word {
        Some((w, rd)) => (Some(w), rd),
        None => (None, state.rd),
    };
    (TxState { mode, cycle_in_word: 0, rd }, TxOutput { word, fifo_pop: pop })
}

pub fn trace_word<S: TraceSink + ?Sized>(sink: &mut S, time: Femtos, word: &Word40) {
    if sink.enabled() {
        sink.record(TraceRecord {
            time,
            domain: Domain::Tx,
            event: word.kind().as_str(),
            payload: format!("{word}"),
        });
    }
}

/// Serializes words back to back at DDR starting at `t0`: bit `i` of the
/// stream occupies `[t0 + i*UI, t0 + (i+1)*UI)`, even bits launching on
/// rising edges and odd bits on falling edges.
pub fn serialize(words: &[Word40], t0: Femtos, clock: ClockSpec) -> Waveform {
    let first = words.first().map(|w| w.bit(0)).unwrap_or(false);
    let mut wave = Waveform::new(t0, clock.ui(), Level::from_bit(first));
    for word in words {
        wave.push_bits(word.serial_bits());
    }
    wave
}
