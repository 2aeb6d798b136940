// SPDX-License-Identifier: Apache-2.0

//! 8b/10b line code with running-disparity tracking.
//!
//! Code groups are held MSB-first in serial order: bit 9 is `a` (transmitted
//! first), bit 0 is `j`. The 6b sub-block `abcdei` occupies bits 9..4 and the
//! 4b sub-block `fghj` bits 3..0, so `0b100111_0100` is D0.0 at RD-.

use core::fmt;

use thiserror::Error;

/// Running disparity of the encoded stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Disparity {
    Negative,
    Positive,
}

impl Disparity {
    pub fn sign(self) -> i8 {
        match self {
            Disparity::Negative => -1,
            Disparity::Positive => 1,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Disparity::Negative => Disparity::Positive,
            Disparity::Positive => Disparity::Negative,
        }
    }
}

impl fmt::Display for Disparity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Disparity::Negative => "RD-",
            Disparity::Positive => "RD+",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("{0:#04x} is not a valid 8b/10b control code")]
    InvalidControl(u8),
    #[error("code group {bits:#012b} is not in the 8b/10b alphabet")]
    NotInTable { bits: u16 },
    #[error("code group {bits:#012b} is illegal under {rd}")]
    DisparityViolation { bits: u16, rd: Disparity },
}

impl CodecError {
    /// The offending 10-bit pattern for decode failures.
    pub fn bits(&self) -> Option<u16> {
        match *self {
            CodecError::InvalidControl(_) => None,
            CodecError::NotInTable { bits } | CodecError::DisparityViolation { bits, .. } => {
                Some(bits)
            }
        }
    }
}

/// One byte to be line coded, either data (`Dx.y`) or control (`Kx.y`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ByteSymbol {
    value: u8,
    control: bool,
}

/// The twelve control codes of the standard alphabet.
pub const CONTROL_CODES: [u8; 12] = [
    0x1C, 0x3C, 0x5C, 0x7C, 0x9C, 0xBC, 0xDC, 0xFC, // K28.0 - K28.7
    0xF7, // K23.7
    0xFB, // K27.7
    0xFD, // K29.7
    0xFE, // K30.7
];

impl ByteSymbol {
    pub const K27_7: ByteSymbol = ByteSymbol { value: 0xFB, control: true };
    pub const K29_7: ByteSymbol = ByteSymbol { value: 0xFD, control: true };
    pub const K28_5: ByteSymbol = ByteSymbol { value: 0xBC, control: true };
    pub const D10_2: ByteSymbol = ByteSymbol { value: 0x4A, control: false };

    pub const fn data(value: u8) -> Self {
        ByteSymbol { value, control: false }
    }

    pub fn control(value: u8) -> Result<Self, CodecError> {
        if CONTROL_CODES.contains(&value) {
            Ok(ByteSymbol { value, control: true })
        } else {
            Err(CodecError::InvalidControl(value))
        }
    }

    pub fn value(self) -> u8 {
        self.value
    }

    pub fn is_control(self) -> bool {
        self.control
    }

    /// `x` in `Dx.y`: the low five bits (EDCBA).
    pub fn x(self) -> u8 {
        self.value & 0x1F
    }

    /// `y` in `Dx.y`: the high three bits (HGF).
    pub fn y(self) -> u8 {
        self.value >> 5
    }
}

impl fmt::Display for ByteSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = if self.control { 'K' } else { 'D' };
        write!(f, "{}{}.{}", kind, self.x(), self.y())
    }
}

/// A 10-bit code group, serial order `a b c d e i f g h j` from bit 9 down.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CodeGroup(u16);

impl CodeGroup {
    pub const MASK: u16 = 0x3FF;

    /// Wraps raw bits; anything above bit 9 is dropped.
    pub const fn from_bits(bits: u16) -> Self {
        CodeGroup(bits & Self::MASK)
    }

    pub const fn bits(self) -> u16 {
        self.0
    }

    pub fn ones(self) -> u32 {
        self.0.count_ones()
    }

    /// Ones minus zeros: -2, 0 or +2 for every legal group.
    pub fn disparity(self) -> i8 {
        2 * self.ones() as i8 - 10
    }

    /// Bit `i` in transmission order (0 = `a`).
    pub fn bit(self, i: usize) -> bool {
        debug_assert!(i < 10);
        (self.0 >> (9 - i)) & 1 == 1
    }
}

impl fmt::Display for CodeGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:06b} {:04b}", self.0 >> 4, self.0 & 0xF)
    }
}

// 5b/6b table, RD- column (abcdei). RD+ is the complement for unbalanced
// codes and for D.07; balanced codes are shared.
const SIX_B: [u8; 32] = [
    0b100111, 0b011101, 0b101101, 0b110001, 0b110101, 0b101001, 0b011001, 0b111000, //
    0b111001, 0b100101, 0b010101, 0b110100, 0b001101, 0b101100, 0b011100, 0b010111, //
    0b011011, 0b100011, 0b010011, 0b110010, 0b001011, 0b101010, 0b011010, 0b111010, //
    0b110011, 0b100110, 0b010110, 0b110110, 0b001110, 0b101110, 0b011110, 0b101011,
];
const SIX_B_K28: u8 = 0b001111;

// 3b/4b data table, RD- column (fghj). D.x.3 (1100) complements like D.07.
const FOUR_B: [u8; 8] = [0b1011, 0b1001, 0b0101, 0b1100, 0b1101, 0b1010, 0b0110, 0b1110];
const FOUR_B_A7: u8 = 0b0111;
// 3b/4b for K28.y, RD- column; every entry complements under RD+.
const FOUR_B_K28: [u8; 8] = [0b1011, 0b0110, 0b1010, 0b1100, 0b1101, 0b0101, 0b1001, 0b0111];

fn complement(code: u8, width: u32) -> u8 {
    !code & ((1u8 << width) - 1)
}

fn sub_block_disparity(code: u8, width: u32) -> i32 {
    2 * code.count_ones() as i32 - width as i32
}

/// Disparity after emitting a sub-block: unbalanced blocks set it from their
/// sign, balanced ones (including the D.07 / D.x.3 alternates) leave it.
fn next_disparity(rd: Disparity, code: u8, width: u32) -> Disparity {
    match sub_block_disparity(code, width) {
        d if d > 0 => Disparity::Positive,
        d if d < 0 => Disparity::Negative,
        _ => rd,
    }
}

fn select(rd_minus: u8, width: u32, rd: Disparity, always_complement: bool) -> u8 {
    let special = (width == 6 && rd_minus == 0b111000) || (width == 4 && rd_minus == 0b1100);
    let complements = always_complement || sub_block_disparity(rd_minus, width) != 0 || special;
    if rd == Disparity::Positive && complements {
        complement(rd_minus, width)
    } else {
        rd_minus
    }
}

fn uses_alternate_seven(x: u8, rd: Disparity) -> bool {
    match rd {
        Disparity::Negative => matches!(x, 17 | 18 | 20),
        Disparity::Positive => matches!(x, 11 | 13 | 14),
    }
}

/// Encodes one symbol under `rd`, returning the code group and the disparity
/// after it.
pub fn encode(symbol: ByteSymbol, rd: Disparity) -> Result<(CodeGroup, Disparity), CodecError> {
    if symbol.control && !CONTROL_CODES.contains(&symbol.value) {
        return Err(CodecError::InvalidControl(symbol.value));
    }
    let (x, y) = (symbol.x(), symbol.y());
    let k28 = symbol.control && x == 28;

    let six = if k28 {
        select(SIX_B_K28, 6, rd, true)
    } else {
        select(SIX_B[x as usize], 6, rd, false)
    };
    let mid = next_disparity(rd, six, 6);

    let four = if k28 {
        select(FOUR_B_K28[y as usize], 4, mid, true)
    } else if y == 7 && (symbol.control || uses_alternate_seven(x, mid)) {
        select(FOUR_B_A7, 4, mid, false)
    } else {
        select(FOUR_B[y as usize], 4, mid, false)
    };
    let out = next_disparity(mid, four, 4);

    Ok((CodeGroup::from_bits(((six as u16) << 4) | four as u16), out))
}

const fn build_six_decode() -> [i8; 64] {
    let mut table = [-1i8; 64];
    let mut x = 0;
    while x < 32 {
        let code = SIX_B[x];
        table[code as usize] = x as i8;
        if code.count_ones() != 3 || code == 0b111000 {
            table[(!code & 0x3F) as usize] = x as i8;
        }
        x += 1;
    }
    table
}

const SIX_DECODE: [i8; 64] = build_six_decode();

fn four_decode_data(code: u8) -> Option<u8> {
    Some(match code {
        0b1011 | 0b0100 => 0,
        0b1001 => 1,
        0b0101 => 2,
        0b1100 | 0b0011 => 3,
        0b1101 | 0b0010 => 4,
        0b1010 => 5,
        0b0110 => 6,
        0b1110 | 0b0001 | 0b0111 | 0b1000 => 7,
        _ => return None,
    })
}

// K28.y 4b codes come in complementary pairs (K28.1/K28.6, K28.2/K28.5), so
// a lookup alone is ambiguous; decode resolves it by re-encoding.
fn k28_candidates(code: u8) -> impl Iterator<Item = ByteSymbol> {
    (0..8u8)
        .filter(move |&y| {
            let c = FOUR_B_K28[y as usize];
            c == code || complement(c, 4) == code
        })
        .map(|y| ByteSymbol { value: (y << 5) | 28, control: true })
}

fn check_canonical(
    symbol: ByteSymbol,
    cg: CodeGroup,
    rd: Disparity,
) -> Result<(ByteSymbol, Disparity), CodecError> {
    let bits = cg.bits();
    match encode(symbol, rd) {
        Ok((expected, next)) if expected == cg => Ok((symbol, next)),
        _ => match encode(symbol, rd.flipped()) {
            Ok((expected, _)) if expected == cg => {
                Err(CodecError::DisparityViolation { bits, rd })
            }
            _ => Err(CodecError::NotInTable { bits }),
        },
    }
}

/// Decodes one code group under `rd`.
///
/// Sub-blocks are looked up first; the candidate symbol is then re-encoded so
/// only the exact canonical group for `rd` is accepted. A group that is
/// canonical under the opposite disparity is reported as a disparity
/// violation.
pub fn decode(cg: CodeGroup, rd: Disparity) -> Result<(ByteSymbol, Disparity), CodecError> {
    let bits = cg.bits();
    let six = (bits >> 4) as u8;
    let four = (bits & 0xF) as u8;

    if six == SIX_B_K28 || six == complement(SIX_B_K28, 6) {
        let mut result = Err(CodecError::NotInTable { bits });
        for symbol in k28_candidates(four) {
            match check_canonical(symbol, cg, rd) {
                Ok(ok) => return Ok(ok),
                Err(e @ CodecError::DisparityViolation { .. }) => result = Err(e),
                Err(_) => {}
            }
        }
        return result;
    }

    let x = SIX_DECODE[six as usize];
    if x < 0 {
        return Err(CodecError::NotInTable { bits });
    }
    let x = x as u8;
    let y = four_decode_data(four).ok_or(CodecError::NotInTable { bits })?;
    let alternate = four == 0b0111 || four == 0b1000;
    let control = alternate && matches!(x, 23 | 27 | 29 | 30);
    check_canonical(ByteSymbol { value: (y << 5) | x, control }, cg, rd)
}

/// Encodes four symbols into one 40-bit line word, lane 0 first, threading a
/// single disparity through lanes 0..3.
pub fn encode_lanes(
    symbols: [ByteSymbol; 4],
    rd: Disparity,
) -> Result<([CodeGroup; 4], Disparity), CodecError> {
    let mut rd = rd;
    let mut groups = [CodeGroup(0); 4];
    for (slot, symbol) in groups.iter_mut().zip(symbols) {
        let (cg, next) = encode(symbol, rd)?;
        *slot = cg;
        rd = next;
    }
    Ok((groups, rd))
}
