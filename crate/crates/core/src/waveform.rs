// SPDX-License-Identifier: Apache-2.0

//! Piecewise-constant differential line signal.

use alloc::collections::VecDeque;

use crate::time::Femtos;

/// Differential level; the swing itself is metadata on the waveform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Level {
    Low,
    High,
}

impl Level {
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Level::High
        } else {
            Level::Low
        }
    }

    pub fn bit(self) -> bool {
        self == Level::High
    }

    pub fn sign(self) -> i8 {
        match self {
            Level::Low => -1,
            Level::High => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub start: Femtos,
    pub level: Level,
}

/// Ordered `(start, level)` segments covering `[start, end)`.
///
/// Consecutive segments always differ in level, so every segment start after
/// the first is a transition. Bits are laid on a grid `origin + k * ui`.
#[derive(Debug, Clone)]
pub struct Waveform {
    segments: VecDeque<Segment>,
    end: Femtos,
    origin: Femtos,
    ui: Femtos,
    swing_mv: u32,
}

pub const DEFAULT_SWING_MV: u32 = 200;

impl Waveform {
    /// An empty waveform starting at `start` on a bit grid anchored there.
    pub fn new(start: Femtos, ui: Femtos, idle: Level) -> Self {
        assert!(ui > 0, "unit interval must be positive");
        let mut segments = VecDeque::new();
        segments.push_back(Segment { start, level: idle });
        Waveform { segments, end: start, origin: start, ui, swing_mv: DEFAULT_SWING_MV }
    }

    pub fn with_swing_mv(mut self, swing_mv: u32) -> Self {
        self.swing_mv = swing_mv;
        self
    }

    pub fn swing_mv(&self) -> u32 {
        self.swing_mv
    }

    pub fn ui(&self) -> Femtos {
        self.ui
    }

    /// Time of bit 0 of the grid.
    pub fn origin(&self) -> Femtos {
        self.origin
    }

    pub fn start(&self) -> Femtos {
        self.segments[0].start
    }

    pub fn end(&self) -> Femtos {
        self.end
    }

    pub fn segments(&self) -> impl Iterator<Item = &Segment> + '_ {
        self.segments.iter()
    }

    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }

    fn set_level_from_end(&mut self, level: Level) {
        let last = self.segments.back_mut().expect("waveform keeps one segment");
        if last.level == level {
            return;
        }
        if last.start == self.end {
            // Zero-length tail: overwrite rather than leave an empty segment,
            // then merge with the previous one if that now matches.
            last.level = level;
            let n = self.segments.len();
            if n >= 2 && self.segments[n - 2].level == level {
                self.segments.pop_back();
            }
        } else {
            self.segments.push_back(Segment { start: self.end, level });
        }
    }

    /// Appends one bit interval.
    pub fn push_bit(&mut self, bit: bool) {
        self.set_level_from_end(Level::from_bit(bit));
        self.end += self.ui;
    }

    pub fn push_bits<I: IntoIterator<Item = bool>>(&mut self, bits: I) {
        for bit in bits {
            self.push_bit(bit);
        }
    }

    /// Extends the current level to `until`.
    pub fn hold_until(&mut self, until: Femtos) {
        if until > self.end {
            self.end = until;
        }
    }

    fn index_at(&self, t: Femtos) -> usize {
        self.segments.partition_point(|s| s.start <= t).saturating_sub(1)
    }

    /// Level at `t`, or `None` outside `[start, end)`. A sample taken exactly
    /// on a transition sees the new level.
    pub fn level_at(&self, t: Femtos) -> Option<Level> {
        if t < self.start() || t >= self.end {
            return None;
        }
        Some(self.segments[self.index_at(t)].level)
    }

    /// Level at `t` with the edges extended outward.
    pub fn level_at_clamped(&self, t: Femtos) -> Level {
        if t < self.start() {
            self.segments[0].level
        } else {
            self.segments[self.index_at(t)].level
        }
    }

    /// Distance from `t` to the closest transition, if there is one.
    pub fn distance_to_transition(&self, t: Femtos) -> Option<Femtos> {
        let next = self.segments.partition_point(|s| s.start <= t);
        let after = (next < self.segments.len()).then(|| self.segments[next].start - t);
        let before = (next >= 2).then(|| t - self.segments[next - 1].start);
        match (before, after) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    pub fn transitions(&self) -> impl Iterator<Item = Femtos> + '_ {
        self.segments.iter().skip(1).map(|s| s.start)
    }

    /// Drops history strictly before `t`, keeping the segment that covers it.
    pub fn discard_before(&mut self, t: Femtos) {
        let keep_from = self.index_at(t);
        if keep_from > 0 {
            self.segments.drain(..keep_from);
        }
    }
}
