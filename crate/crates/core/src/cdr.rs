// SPDX-License-Identifier: Apache-2.0

//! Bang-bang clock-data recovery: Alexander phase detectors, the
//! accumulate-and-divide loop filter and a 32-step phase interpolator.
//!
//! Each RX clock cycle yields four samples: even data at the PI phase `p`,
//! an edge at `p + T/4`, odd data at `p + T/2` and an edge at `p + 3T/4`.
//! Four cycles form one window of 8 data and 8 edge samples.

use alloc::vec::Vec;

use crate::rx::SamplePair;
use crate::time::{ClockSpec, Femtos, PI_CODES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PdVote {
    Early,
    Late,
    None,
}

impl PdVote {
    pub fn value(self) -> i32 {
        match self {
            PdVote::Early => 1,
            PdVote::Late => -1,
            PdVote::None => 0,
        }
    }
}

/// Alexander detector over two consecutive data samples and the edge sample
/// between them.
pub fn alexander_pd(d1: bool, e: bool, d2: bool) -> PdVote {
    if d1 == d2 {
        PdVote::None
    } else if e == d1 {
        PdVote::Early
    } else {
        PdVote::Late
    }
}

/// Net Early-minus-Late count over the 7 triples `(d[k], e[k], d[k+1])`.
pub fn pd_bank(data: &[bool; 8], edges: &[bool; 8]) -> i32 {
    (0..7).map(|k| alexander_pd(data[k], edges[k], data[k + 1]).value()).sum()
}

/// Phase interpolator position. The phase is kept unwrapped so that a full
/// rotation moves the sampling clock by one whole period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PhaseState {
    unwrapped: i64,
}

impl PhaseState {
    pub fn new(pi_code: i64) -> Self {
        PhaseState { unwrapped: pi_code }
    }

    pub fn pi_code(&self) -> u8 {
        self.unwrapped.rem_euclid(PI_CODES) as u8
    }

    pub fn unwrapped(&self) -> i64 {
        self.unwrapped
    }

    /// Quadrature clock code, a quarter period after the data clock.
    pub fn edge_code(&self) -> u8 {
        (self.unwrapped + PI_CODES / 4).rem_euclid(PI_CODES) as u8
    }

    /// Offset of the data sampling clock from the reference clock.
    pub fn offset_fs(&self, clock: ClockSpec) -> Femtos {
        self.unwrapped * clock.pi_step()
    }
}

pub fn pi_rotate(p: PhaseState, delta_code: i64) -> PhaseState {
    PhaseState { unwrapped: p.unwrapped + delta_code }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoopFilterState {
    pub accumulator: i32,
    divider_log2: u8,
    /// RX cycles into the current 4-cycle window.
    pub cycle_count: u8,
    pub residue: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("loop divider must be a power of two up to 128, got {0}")]
pub struct InvalidDivider(pub u32);

impl LoopFilterState {
    pub fn new(divider_n: u32) -> Result<Self, InvalidDivider> {
        if !divider_n.is_power_of_two() || divider_n > 128 {
            return Err(InvalidDivider(divider_n));
        }
        Ok(LoopFilterState {
            accumulator: 0,
            divider_log2: divider_n.trailing_zeros() as u8,
            cycle_count: 0,
            residue: 0,
        })
    }

    pub fn divider_n(&self) -> u32 {
        1 << self.divider_log2
    }
}

impl Default for LoopFilterState {
    fn default() -> Self {
        LoopFilterState::new(4).expect("4 is a valid divider")
    }
}

/// One window of loop filtering. The divide is an arithmetic shift, so the
/// quotient rounds toward minus infinity and the remainder carried in
/// `residue` is always in `0..N`.
pub fn filter_step(lf: LoopFilterState, net: i32) -> (LoopFilterState, i32) {
    let total = lf.accumulator + net + lf.residue;
    let delta = total >> lf.divider_log2;
    let residue = total - (delta << lf.divider_log2);
    (LoopFilterState { accumulator: 0, cycle_count: 0, residue, ..lf }, delta)
}

/// The four samples taken in one RX clock cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CycleSamples {
    pub data: SamplePair,
    /// Edge after the even sample, then edge after the odd sample.
    pub edges: [bool; 2],
}

/// Anything that can sample one RX clock cycle at a given PI phase.
pub trait PhaseSampler {
    fn sample_cycle(&mut self, phase: &PhaseState) -> CycleSamples;

    /// Distance of the next cycle's even sampling instant from the nearest UI
    /// centre, folded into `[-UI/2, UI/2)`. `None` when the sampler has no
    /// notion of a reference grid.
    fn phase_error_fs(&self, phase: &PhaseState) -> Option<Femtos>;

    fn clock(&self) -> ClockSpec;
}

/// Per-window loop record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowRecord {
    pub index: u64,
    pub net: i32,
    /// Accumulated value entering the divider.
    pub accumulator: i32,
    pub delta: i32,
    /// Code after applying `delta`.
    pub pi_code: u8,
    pub unwrapped: i64,
}

/// The full loop, fed one cycle at a time. The correction computed from a
/// window moves the sampling clock from the next window on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cdr {
    phase: PhaseState,
    filter: LoopFilterState,
    data: [bool; 8],
    edges: [bool; 8],
    windows: u64,
    frozen: bool,
}

impl Cdr {
    pub fn new(phase: PhaseState, filter: LoopFilterState) -> Self {
        Cdr { phase, filter, data: [false; 8], edges: [false; 8], windows: 0, frozen: false }
    }

    pub fn phase(&self) -> PhaseState {
        self.phase
    }

    pub fn filter(&self) -> LoopFilterState {
        self.filter
    }

    pub fn windows(&self) -> u64 {
        self.windows
    }

    /// Holds the PI code; samples still flow but the filter is not run.
    pub fn set_frozen(&mut self, frozen: bool) {
        self.frozen = frozen;
    }

    pub fn push_cycle(&mut self, s: CycleSamples) -> Option<WindowRecord> {
        let c = usize::from(self.filter.cycle_count);
        self.data[2 * c] = s.data.even;
        self.data[2 * c + 1] = s.data.odd;
        self.edges[2 * c] = s.edges[0];
        self.edges[2 * c + 1] = s.edges[1];
        self.filter.cycle_count += 1;
        if self.filter.cycle_count < 4 {
            return None;
        }
        self.filter.cycle_count = 0;

        let net = pd_bank(&self.data, &self.edges);
        let accumulator = self.filter.accumulator + net + self.filter.residue;
        let delta = if self.frozen {
            0
        } else {
            let (lf, delta) = filter_step(self.filter, net);
            self.filter = lf;
            delta
        };
        self.phase = pi_rotate(self.phase, i64::from(delta));
        let rec = WindowRecord {
            index: self.windows,
            net,
            accumulator,
            delta,
            pi_code: self.phase.pi_code(),
            unwrapped: self.phase.unwrapped(),
        };
        self.windows += 1;
        Some(rec)
    }

    /// Samples and processes one RX clock cycle.
    pub fn run_cycle<S: PhaseSampler + ?Sized>(&mut self, sampler: &mut S) -> Option<WindowRecord> {
        let s = sampler.sample_cycle(&self.phase);
        self.push_cycle(s)
    }
}

/// Lock criterion: phase error within this many PI codes...
pub const LOCK_TOLERANCE_CODES: i64 = 2;
/// ...for this many consecutive windows.
pub const LOCK_WINDOWS: u32 = 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LockOutcome {
    pub phase: PhaseState,
    pub filter: LoopFilterState,
    pub locked: bool,
    /// RX cycles elapsed before the first window of the qualifying run.
    pub settle_cycles: Option<u64>,
    pub cycles_run: u64,
    pub windows: Vec<WindowRecord>,
}

/// Runs the loop on `sampler` until the lock criterion holds or
/// `budget_cycles` RX cycles have been spent.
pub fn cdr_lock<S: PhaseSampler + ?Sized>(
    sampler: &mut S,
    phase: PhaseState,
    filter: LoopFilterState,
    budget_cycles: u64,
) -> LockOutcome {
    let clock = sampler.clock();
    let tol = LOCK_TOLERANCE_CODES * clock.pi_step();
    let mut cdr = Cdr::new(phase, filter);
    let mut windows = Vec::new();
    let mut run = 0u32;
    let mut run_start = 0u64;
    let mut cycles = 0u64;
    let mut window_ok = true;

    while cycles < budget_cycles {
        if cdr.filter.cycle_count == 0 {
            window_ok = true;
        }
        if let Some(err) = sampler.phase_error_fs(&cdr.phase) {
            window_ok &= err.abs() <= tol;
        }
        let rec = cdr.run_cycle(sampler);
        cycles += 1;
        if let Some(rec) = rec {
            windows.push(rec);
            if window_ok {
                if run == 0 {
                    run_start = cycles - 4;
                }
                run += 1;
            } else {
                run = 0;
            }
            if run >= LOCK_WINDOWS {
                return LockOutcome {
                    phase: cdr.phase,
                    filter: cdr.filter,
                    locked: true,
                    settle_cycles: Some(run_start),
                    cycles_run: cycles,
                    windows,
                };
            }
        }
    }
    LockOutcome {
        phase: cdr.phase,
        filter: cdr.filter,
        locked: false,
        settle_cycles: None,
        cycles_run: cycles,
        windows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pd_truth_table() {
        assert_eq!(alexander_pd(false, false, true), PdVote::Early);
        assert_eq!(alexander_pd(false, true, true), PdVote::Late);
        for x in [false, true] {
            assert_eq!(alexander_pd(true, x, true), PdVote::None);
        }
    }

    #[test]
    fn pd_bank_extremes() {
        let alt = [false, true, false, true, false, true, false, true];
        // Early everywhere: each edge sample still equals the preceding data.
        assert_eq!(pd_bank(&alt, &alt), 7);
        let inv = alt.map(|b| !b);
        assert_eq!(pd_bank(&alt, &inv), -7);
        assert_eq!(pd_bank(&[true; 8], &alt), 0);
    }

    #[test]
    fn filter_examples() {
        let lf = LoopFilterState::new(1).unwrap();
        assert_eq!(filter_step(lf, 3), (LoopFilterState { residue: 0, ..lf }, 3));

        let lf = LoopFilterState::new(8).unwrap();
        let (lf, d1) = filter_step(lf, 3);
        assert_eq!((d1, lf.residue), (0, 3));
        let (lf, d2) = filter_step(lf, 3);
        assert_eq!((d2, lf.residue), (0, 6));
    }

    #[test]
    fn invalid_dividers() {
        for n in [0, 3, 256, 100] {
            assert_eq!(LoopFilterState::new(n), Err(InvalidDivider(n)));
        }
    }

    #[test]
    fn pi_rotation() {
        assert_eq!(pi_rotate(PhaseState::new(31), 1).pi_code(), 0);
        for k in 0..32 {
            assert_eq!(pi_rotate(PhaseState::new(k), 32).pi_code(), k as u8);
        }
        let c = ClockSpec::nominal();
        assert_eq!(pi_rotate(PhaseState::new(0), 1).offset_fs(c), 78_125);
        assert_eq!(PhaseState::new(30).edge_code(), 6);
    }

    #[test]
    fn zero_net_holds_phase() {
        let mut cdr = Cdr::new(PhaseState::new(5), LoopFilterState::default());
        for _ in 0..400 {
            cdr.push_cycle(CycleSamples::default());
        }
        assert_eq!(cdr.phase(), PhaseState::new(5));
        assert_eq!(cdr.windows(), 100);
    }
}
