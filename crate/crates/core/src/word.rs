// SPDX-License-Identifier: Apache-2.0

//! 40-bit line words: four code groups, lane 0 transmitted first.

use core::fmt;

use crate::codec::{self, ByteSymbol, CodeGroup, CodecError, Disparity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WordKind {
    Training,
    StartFlit,
    DataBody,
    StopFlit,
}

impl WordKind {
    pub fn as_str(self) -> &'static str {
        match self {
            WordKind::Training => "training",
            WordKind::StartFlit => "start_flit",
            WordKind::DataBody => "data",
            WordKind::StopFlit => "stop_flit",
        }
    }
}

impl fmt::Display for WordKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Four concatenated code groups. Bit 39 is the first bit on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Word40 {
    bits: u64,
    kind: WordKind,
}

impl Word40 {
    pub const BITS: usize = 40;
    pub const MASK: u64 = (1 << 40) - 1;

    pub fn from_groups(groups: [CodeGroup; 4], kind: WordKind) -> Self {
        let bits = groups
            .iter()
            .fold(0u64, |acc, cg| (acc << 10) | u64::from(cg.bits()));
        Word40 { bits, kind }
    }

    /// Raw 40 bits as received; no code-group check is possible here.
    pub fn from_raw(bits: u64, kind: WordKind) -> Self {
        Word40 { bits: bits & Self::MASK, kind }
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn kind(&self) -> WordKind {
        self.kind
    }

    pub fn with_kind(self, kind: WordKind) -> Self {
        Word40 { kind, ..self }
    }

    pub fn lane(&self, lane: usize) -> CodeGroup {
        debug_assert!(lane < 4);
        CodeGroup::from_bits((self.bits >> (30 - 10 * lane)) as u16)
    }

    pub fn lanes(&self) -> [CodeGroup; 4] {
        [self.lane(0), self.lane(1), self.lane(2), self.lane(3)]
    }

    /// Bit `i` in transmission order.
    pub fn bit(&self, i: usize) -> bool {
        debug_assert!(i < Self::BITS);
        (self.bits >> (39 - i)) & 1 == 1
    }

    pub fn serial_bits(&self) -> impl Iterator<Item = bool> + '_ {
        (0..Self::BITS).map(move |i| self.bit(i))
    }
}

impl fmt::Display for Word40 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:010x}", self.bits)
    }
}

/// Encodes four symbols into one line word with a single disparity chain
/// threaded lane 0 to lane 3.
pub fn encode_word(
    symbols: [ByteSymbol; 4],
    rd: Disparity,
) -> Result<(Word40, Disparity), CodecError> {
    let (groups, rd) = codec::encode_lanes(symbols, rd)?;
    Ok((Word40::from_groups(groups, WordKind::DataBody), rd))
}

pub fn encode_data_word(bytes: [u8; 4], rd: Disparity) -> (Word40, Disparity) {
    // Data symbols are always encodable.
    encode_word(bytes.map(ByteSymbol::data), rd).expect("data bytes always encode")
}
