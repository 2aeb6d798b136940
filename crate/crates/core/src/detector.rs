// SPDX-License-Identifier: Apache-2.0

//! Start/Stop flit sequence detector.
//!
//! The detector consumes one even/odd sample pair per RX clock and checks the
//! incoming bits two at a time against the encoded flit. Because a bit sent on
//! a TX rising edge may be captured on an RX falling edge, every candidate
//! match is tracked on two alignments: *aligned* (pattern bit 0 is an even
//! sample) and *shifted* (pattern bit 0 is an odd sample, so the match needs
//! one extra pair at the end). Partial matches are kept as bitsets, one bit
//! per matched pair count, which is the shift-and formulation of the usual
//! sequence-detector state machine: a pattern of `L` bits walks `Start -> Check1 -> ...` and
//! `Check(L/2)` is only reachable on the shifted alignment.

use crate::codec::{encode, ByteSymbol, Disparity};
use crate::rx::SamplePair;

/// Up to two equally long bit sequences (one per disparity variant), held
/// MSB-first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlitPattern {
    len: u8,
    variants: u8,
    aligned: [[u64; 4]; 2],
    shifted: [[u64; 4]; 2],
}

fn pair_index(even: bool, odd: bool) -> usize {
    (usize::from(even) << 1) | usize::from(odd)
}

impl FlitPattern {
    /// Builds a pattern from 1 or 2 variants of `len` bits (even, 2..=40).
    pub fn new(variants: &[u64], len: u8) -> Self {
        assert!((2..=40).contains(&len) && len.is_multiple_of(2), "pattern length must be even, 2..=40");
        assert!(!variants.is_empty() && variants.len() <= 2);
        let n = len as usize;
        let bit = |v: u64, i: usize| (v >> (n - 1 - i)) & 1 == 1;

        let mut aligned = [[0u64; 4]; 2];
        let mut shifted = [[0u64; 4]; 2];
        for (slot, &v) in variants.iter().enumerate() {
            for pair in 0..4usize {
                let (even, odd) = (pair & 2 != 0, pair & 1 != 0);
                let mut a = 0u64;
                for j in 0..n / 2 {
                    if bit(v, 2 * j) == even && bit(v, 2 * j + 1) == odd {
                        a |= 1 << j;
                    }
                }
                let mut s = 0u64;
                if bit(v, 0) == odd {
                    s |= 1;
                }
                for j in 1..n / 2 {
                    if bit(v, 2 * j - 1) == even && bit(v, 2 * j) == odd {
                        s |= 1 << j;
                    }
                }
                if bit(v, n - 1) == even {
                    s |= 1 << (n / 2);
                }
                aligned[slot][pair] = a;
                shifted[slot][pair] = s;
            }
        }
        FlitPattern { len, variants: variants.len() as u8, aligned, shifted }
    }

    fn repeated(symbol: ByteSymbol, lanes: u8) -> Self {
        let mut variants = [0u64; 2];
        for (slot, rd) in [Disparity::Negative, Disparity::Positive].into_iter().enumerate() {
            let mut rd = rd;
            for _ in 0..lanes {
                let (cg, next) = encode(symbol, rd).expect("control symbol is valid");
                variants[slot] = (variants[slot] << 10) | u64::from(cg.bits());
                rd = next;
            }
        }
        FlitPattern::new(&variants, 10 * lanes)
    }

    /// Full 40-bit Start flit, either starting disparity.
    pub fn start() -> Self {
        Self::repeated(ByteSymbol::K27_7, 4)
    }

    /// Full 40-bit Stop flit, either starting disparity.
    pub fn stop() -> Self {
        Self::repeated(ByteSymbol::K29_7, 4)
    }

    /// One code group of `symbol` (10 bits), for short-pattern experiments.
    pub fn single_lane(symbol: ByteSymbol) -> Self {
        Self::repeated(symbol, 1)
    }

    pub fn len(&self) -> u8 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Pairs needed for an aligned match.
    pub fn aligned_steps(&self) -> u8 {
        self.len / 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FlitTarget {
    Start,
    Stop,
}

impl FlitTarget {
    pub fn pattern(self) -> FlitPattern {
        match self {
            FlitTarget::Start => FlitPattern::start(),
            FlitTarget::Stop => FlitPattern::stop(),
        }
    }
}

/// Sequence-detector state names, generalized to patterns longer than 8 bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DetectorPhase {
    Start,
    /// `n` pairs matched so far.
    Check(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DetectorState {
    aligned: [u64; 2],
    shifted: [u64; 2],
    shift: bool,
    pending: Option<bool>,
}

/// A confirmed flit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Detection {
    /// The flit arrived one bit late relative to the even/odd pairing.
    pub shift: bool,
    /// With `shift`, the odd sample of the final pair: the first bit after
    /// the flit, to be carried by the realigner.
    pub pending: Option<bool>,
    /// Starting disparity of the variant that matched.
    pub disparity: Disparity,
}

fn top_progress(tracks: &[u64; 2]) -> u32 {
    tracks.iter().map(|t| 64 - t.leading_zeros()).max().unwrap_or(0)
}

impl DetectorState {
    pub fn phase(&self) -> DetectorPhase {
        let best = top_progress(&self.aligned).max(top_progress(&self.shifted));
        if best == 0 {
            DetectorPhase::Start
        } else {
            DetectorPhase::Check(best as u8)
        }
    }

    /// Whether the leading partial match is on the shifted alignment.
    pub fn shift(&self) -> bool {
        self.shift
    }

    pub fn pending(&self) -> Option<bool> {
        self.pending
    }
}

/// Which alignments may open a new partial match on this step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StartGate {
    pub aligned: bool,
    pub shifted: bool,
}

impl StartGate {
    pub const ANY: StartGate = StartGate { aligned: true, shifted: true };
    pub const NONE: StartGate = StartGate { aligned: false, shifted: false };
    pub const ALIGNED: StartGate = StartGate { aligned: true, shifted: false };
}

/// Advances the detector by one sample pair.
pub fn detector_step(
    state: &DetectorState,
    pair: SamplePair,
    pattern: &FlitPattern,
) -> (DetectorState, Option<Detection>) {
    detector_step_gated(state, pair, pattern, StartGate::ANY)
}

/// As [`detector_step`], restricting where new matches may begin. Stop-flit
/// monitoring during data reception opens matches only on word boundaries.
pub fn detector_step_gated(
    state: &DetectorState,
    pair: SamplePair,
    pattern: &FlitPattern,
    gate: StartGate,
) -> (DetectorState, Option<Detection>) {
    let p = pair_index(pair.even, pair.odd);
    let aligned_done = 1u64 << (pattern.len / 2 - 1);
    let shifted_done = 1u64 << (pattern.len / 2);

    let mut next = DetectorState::default();
    let mut hit = None;
    const VARIANT_RD: [Disparity; 2] = [Disparity::Negative, Disparity::Positive];
    for (v, &rd) in VARIANT_RD.iter().enumerate().take(pattern.variants as usize) {
        let a = ((state.aligned[v] << 1) | u64::from(gate.aligned)) & pattern.aligned[v][p];
        let s = ((state.shifted[v] << 1) | u64::from(gate.shifted)) & pattern.shifted[v][p];
        if a & aligned_done != 0 {
            hit = Some(Detection { shift: false, pending: None, disparity: rd });
        } else if s & shifted_done != 0 && hit.is_none() {
            hit = Some(Detection { shift: true, pending: Some(pair.odd), disparity: rd });
        }
        next.aligned[v] = a & (aligned_done - 1);
        next.shifted[v] = s & (shifted_done - 1);
    }

    if hit.is_some() {
        return (DetectorState::default(), hit);
    }
    next.shift = top_progress(&next.shifted) > top_progress(&next.aligned);
    next.pending = next.shift.then_some(pair.odd);
    (next, None)
}

/// Stateful wrapper that owns its pattern and counts steps for word gating.
#[derive(Debug, Clone, Copy)]
pub struct SequenceDetector {
    pattern: FlitPattern,
    state: DetectorState,
}

impl SequenceDetector {
    pub fn new(pattern: FlitPattern) -> Self {
        SequenceDetector { pattern, state: DetectorState::default() }
    }

    pub fn for_target(target: FlitTarget) -> Self {
        Self::new(target.pattern())
    }

    pub fn state(&self) -> &DetectorState {
        &self.state
    }

    pub fn pattern(&self) -> &FlitPattern {
        &self.pattern
    }

    pub fn reset(&mut self) {
        self.state = DetectorState::default();
    }

    pub fn step(&mut self, pair: SamplePair) -> Option<Detection> {
        self.step_gated(pair, StartGate::ANY)
    }

    pub fn step_gated(&mut self, pair: SamplePair, gate: StartGate) -> Option<Detection> {
        let (next, hit) = detector_step_gated(&self.state, pair, &self.pattern, gate);
        self.state = next;
        hit
    }
}
