// SPDX-License-Identifier: Apache-2.0

//! Receive side: sample intake, realignment, 2:40 deserialization, 10b/8b
//! decoding and the RX controller.

use crate::codec::{decode, CodeGroup, CodecError, Disparity};
use crate::detector::{Detection, FlitPattern, SequenceDetector, StartGate};
use crate::time::CYCLES_PER_WORD;
use crate::word::{Word40, WordKind};

/// The two data bits recovered in one RX clock cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct SamplePair {
    pub even: bool,
    pub odd: bool,
}

impl SamplePair {
    pub fn new(even: bool, odd: bool) -> Self {
        SamplePair { even, odd }
    }
}

/// Timing synchronizer. With `shift` set, each output pair is the previous
/// odd sample followed by the current even sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Realigner {
    shift: bool,
    carried: Option<bool>,
}

impl Realigner {
    pub fn identity() -> Self {
        Realigner::default()
    }

    /// Shifted realigner, optionally seeded with the odd sample of the pair
    /// that completed detection.
    pub fn shifted(carried: Option<bool>) -> Self {
        Realigner { shift: true, carried }
    }

    pub fn from_detection(d: &Detection) -> Self {
        if d.shift {
            Self::shifted(d.pending)
        } else {
            Self::identity()
        }
    }

    pub fn shift(&self) -> bool {
        self.shift
    }

    pub fn push(&mut self, pair: SamplePair) -> Option<SamplePair> {
        if !self.shift {
            return Some(pair);
        }
        let out = self.carried.map(|prev| SamplePair { even: prev, odd: pair.even });
        self.carried = Some(pair.odd);
        out
    }
}

/// Re-pairs a whole stream; the shifted form drops the very first sample.
pub fn realign(pairs: &[SamplePair], shift: bool) -> alloc::vec::Vec<SamplePair> {
    let mut r = if shift { Realigner::shifted(None) } else { Realigner::identity() };
    pairs.iter().filter_map(|&p| r.push(p)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RxMode {
    Idle,
    WarmUp,
    Hunting,
    DataComm,
}

impl RxMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RxMode::Idle => "idle",
            RxMode::WarmUp => "warm_up",
            RxMode::Hunting => "hunting",
            RxMode::DataComm => "data_comm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RxState {
    pub mode: RxMode,
    /// Bits accumulated toward the current word, 0..39.
    pub word_fill: u8,
    pub rd: Disparity,
    shift_reg: u64,
}

impl Default for RxState {
    fn default() -> Self {
        RxState { mode: RxMode::Idle, word_fill: 0, rd: Disparity::Negative, shift_reg: 0 }
    }
}

impl RxState {
    pub fn with_mode(mode: RxMode) -> Self {
        RxState { mode, ..Self::default() }
    }

    /// Drops any partial word.
    pub fn clear_word(&mut self) {
        self.word_fill = 0;
        self.shift_reg = 0;
    }
}

/// Accumulates one pair; returns a full word every 20 steps.
pub fn deserialize_step(rx: RxState, pair: SamplePair) -> (RxState, Option<Word40>) {
    debug_assert_eq!(rx.mode, RxMode::DataComm);
    let reg = (rx.shift_reg << 2) | (u64::from(pair.even) << 1) | u64::from(pair.odd);
    let fill = rx.word_fill + 2;
    if usize::from(fill) == Word40::BITS {
        let word = Word40::from_raw(reg, WordKind::DataBody);
        (RxState { word_fill: 0, shift_reg: 0, ..rx }, Some(word))
    } else {
        (RxState { word_fill: fill, shift_reg: reg, ..rx }, None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RxEvents {
    pub start_detected: bool,
    pub stop_detected: bool,
    pub warm_en: bool,
    pub detector_en: bool,
}

/// RX controller transition. A stop flit always shuts the datapath;
/// `warm_en` then decides between staying warm and going idle.
pub fn rx_controller_step(mode: RxMode, ev: RxEvents) -> RxMode {
    let any_en = ev.warm_en || ev.detector_en;
    match mode {
        RxMode::Idle if ev.warm_en => RxMode::WarmUp,
        RxMode::Idle => RxMode::Idle,
        RxMode::WarmUp if ev.detector_en => RxMode::Hunting,
        RxMode::WarmUp if ev.warm_en => RxMode::WarmUp,
        RxMode::WarmUp => RxMode::Idle,
        RxMode::Hunting if ev.start_detected => RxMode::DataComm,
        RxMode::Hunting if ev.detector_en => RxMode::Hunting,
        RxMode::Hunting if any_en => RxMode::WarmUp,
        RxMode::Hunting => RxMode::Idle,
        RxMode::DataComm if ev.stop_detected => match (ev.warm_en, ev.detector_en) {
            (true, true) => RxMode::Hunting,
            (true, false) => RxMode::WarmUp,
            (false, _) => RxMode::Idle,
        },
        RxMode::DataComm => RxMode::DataComm,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodedWord {
    pub bytes: [u8; 4],
    pub control: [bool; 4],
    pub errors: [Option<CodecError>; 4],
}

impl DecodedWord {
    /// A lane failed to decode, or decoded to a control symbol where only
    /// data may appear.
    pub fn lane_bad(&self, lane: usize) -> bool {
        self.errors[lane].is_some() || self.control[lane]
    }

    pub fn corrupt(&self) -> bool {
        (0..4).any(|l| self.lane_bad(l))
    }

    /// Payload with bad lanes zero-filled.
    pub fn payload(&self) -> [u8; 4] {
        let mut out = self.bytes;
        for (lane, b) in out.iter_mut().enumerate() {
            if self.lane_bad(lane) {
                *b = 0;
            }
        }
        out
    }
}

/// After a failed lane the disparity is resynchronized from the received
/// group itself when it is unbalanced.
fn resync(cg: CodeGroup, rd: Disparity) -> Disparity {
    match cg.disparity() {
        d if d > 0 => Disparity::Positive,
        d if d < 0 => Disparity::Negative,
        _ => rd,
    }
}

/// Four lane decodes with the disparity threaded lane 0 to 3.
pub fn decode_word(w: &Word40, rd: Disparity) -> (DecodedWord, Disparity) {
    let mut out = DecodedWord { bytes: [0; 4], control: [false; 4], errors: [None; 4] };
    let mut rd = rd;
    for (lane, cg) in w.lanes().into_iter().enumerate() {
        match decode(cg, rd) {
            Ok((sym, next)) => {
                out.bytes[lane] = sym.value();
                out.control[lane] = sym.is_control();
                rd = next;
            }
            Err(e) => {
                out.errors[lane] = Some(e);
                rd = resync(cg, rd);
            }
        }
    }
    (out, rd)
}

/// The decoders' fixed one-slot latency: a word pushed in slot `k` comes out
/// in slot `k + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DecoderPipeline {
    held: Option<DecodedWord>,
}

impl DecoderPipeline {
    pub fn push(&mut self, incoming: Option<DecodedWord>) -> Option<DecodedWord> {
        core::mem::replace(&mut self.held, incoming)
    }

    pub fn flush(&mut self) -> Option<DecodedWord> {
        self.held.take()
    }
}

/// What one RX clock cycle produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RxStepOutput {
    pub start: Option<Detection>,
    pub stop: bool,
    /// A completed data word, only ever produced in DataComm.
    pub word: Option<Word40>,
    pub mode_changed: bool,
}

/// Detector, realigner and deserializer wired the way the controller enables
/// them.
///
/// While hunting, the start detector watches every pair on both alignments.
/// In DataComm the realigned pairs feed the deserializer and a stop detector
/// that may only open a match on a word boundary, so the frame end is the
/// first word that is a complete stop flit.
#[derive(Debug, Clone)]
pub struct RxDatapath {
    state: RxState,
    start: SequenceDetector,
    stop: SequenceDetector,
    realigner: Realigner,
    step_in_word: u32,
}

impl Default for RxDatapath {
    fn default() -> Self {
        Self::new()
    }
}

impl RxDatapath {
    pub fn new() -> Self {
        RxDatapath {
            state: RxState::default(),
            start: SequenceDetector::new(FlitPattern::start()),
            stop: SequenceDetector::new(FlitPattern::stop()),
            realigner: Realigner::identity(),
            step_in_word: 0,
        }
    }

    pub fn mode(&self) -> RxMode {
        self.state.mode
    }

    pub fn state(&self) -> &RxState {
        &self.state
    }

    pub fn realigner(&self) -> &Realigner {
        &self.realigner
    }

    fn set_mode(&mut self, mode: RxMode) -> bool {
        if mode == self.state.mode {
            return false;
        }
        if mode == RxMode::Hunting {
            self.start.reset();
        }
        if mode != RxMode::DataComm {
            self.state.clear_word();
            self.stop.reset();
        }
        self.state.mode = mode;
        true
    }

    /// Applies enable changes with no sample in hand.
    pub fn control(&mut self, warm_en: bool, detector_en: bool) -> bool {
        let ev = RxEvents { warm_en, detector_en, ..RxEvents::default() };
        let next = rx_controller_step(self.state.mode, ev);
        self.set_mode(next)
    }

    /// Forces the datapath out of DataComm, as after a missing stop flit.
    pub fn abort_frame(&mut self, warm_en: bool, detector_en: bool) {
        let ev = RxEvents { stop_detected: true, warm_en, detector_en, ..RxEvents::default() };
        let next = rx_controller_step(self.state.mode, ev);
        self.set_mode(next);
    }

    pub fn step(&mut self, pair: SamplePair, warm_en: bool, detector_en: bool) -> RxStepOutput {
        let mut out = RxStepOutput::default();
        let mut ev = RxEvents { warm_en, detector_en, ..RxEvents::default() };

        match self.state.mode {
            RxMode::Hunting => {
                if let Some(d) = self.start.step(pair) {
                    ev.start_detected = true;
                    out.start = Some(d);
                    self.realigner = Realigner::from_detection(&d);
                    self.state.clear_word();
                    self.stop.reset();
                    self.step_in_word = 0;
                }
            }
            RxMode::DataComm => {
                if let Some(p) = self.realigner.push(pair) {
                    let gate =
                        if self.step_in_word == 0 { StartGate::ALIGNED } else { StartGate::NONE };
                    let stop = self.stop.step_gated(p, gate).is_some();
                    let (st, word) = deserialize_step(self.state, p);
                    self.state = st;
                    self.step_in_word = (self.step_in_word + 1) % CYCLES_PER_WORD;
                    if stop {
                        ev.stop_detected = true;
                        out.stop = true;
                    } else {
                        out.word = word;
                    }
                }
            }
            RxMode::Idle | RxMode::WarmUp => {}
        }

        let next = rx_controller_step(self.state.mode, ev);
        out.mode_changed = self.set_mode(next);
        out
    }
}
