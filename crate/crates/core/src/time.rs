// SPDX-License-Identifier: Apache-2.0

//! Integer-femtosecond time base and fixed-point unit-interval fractions.

/// Simulation time in femtoseconds.
pub type Femtos = i64;

pub const FS_PER_PS: Femtos = 1_000;
pub const FS_PER_NS: Femtos = 1_000_000;
pub const FS_PER_US: Femtos = 1_000_000_000;
pub const FS_PER_S: Femtos = 1_000_000_000_000_000;

/// 400 MHz.
pub const NOMINAL_CLOCK_PERIOD: Femtos = 2_500_000;

/// TX clock cycles per 40-bit word at double data rate.
pub const CYCLES_PER_WORD: u32 = 20;

/// Phase interpolator positions per clock period.
pub const PI_CODES: i64 = 32;

/// Clock of one chip; all derived intervals are exact when the period is a
/// multiple of 32 fs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClockSpec {
    period: Femtos,
}

impl ClockSpec {
    pub fn new(period: Femtos) -> Option<Self> {
        (period > 0).then_some(ClockSpec { period })
    }

    pub const fn nominal() -> Self {
        ClockSpec { period: NOMINAL_CLOCK_PERIOD }
    }

    pub fn period(&self) -> Femtos {
        self.period
    }

    /// One bit at DDR: half a clock period.
    pub fn ui(&self) -> Femtos {
        self.period / 2
    }

    pub fn pi_step(&self) -> Femtos {
        self.period / PI_CODES
    }

    pub fn word_slot(&self) -> Femtos {
        self.period * CYCLES_PER_WORD as Femtos
    }

    pub fn line_rate_bps(&self) -> f64 {
        2.0 * FS_PER_S as f64 / self.period as f64
    }
}

impl Default for ClockSpec {
    fn default() -> Self {
        Self::nominal()
    }
}

/// A signed fraction of a unit interval in 1/65536 UI steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct UiFraction(pub i64);

impl UiFraction {
    pub const ONE: UiFraction = UiFraction(1 << 16);
    pub const ZERO: UiFraction = UiFraction(0);

    /// Nearest representable fraction to `ui` (ties away from zero).
    pub fn from_ui(ui: f64) -> Self {
        let scaled = ui * 65536.0;
        UiFraction(if scaled >= 0.0 {
            libm::floor(scaled + 0.5) as i64
        } else {
            -(libm::floor(-scaled + 0.5) as i64)
        })
    }

    pub fn as_ui(self) -> f64 {
        self.0 as f64 / 65536.0
    }

    /// Converts to femtoseconds for a given UI, rounding half away from zero.
    pub fn to_fs(self, ui: Femtos) -> Femtos {
        let num = i128::from(self.0) * i128::from(ui);
        let half = 1i128 << 15;
        let fs = if num >= 0 { (num + half) >> 16 } else { -((-num + half) >> 16) };
        fs as Femtos
    }
}
