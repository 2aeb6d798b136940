// SPDX-License-Identifier: Apache-2.0

//! Wire plus comparators: turns a TX waveform into RX sample bits at the
//! instants the CDR asks for.
//!
//! Impairments are timing only: a static phase offset, Gaussian jitter drawn
//! per sample, a frequency offset of the RX clock and a metastability band
//! around each transition in which the comparator output is a coin flip.
//! Random draws come from ChaCha8 streams seeked by sample index, so a given
//! `(seed, index)` always produces the same jitter no matter what order the
//! samples are taken in.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::cdr::{CycleSamples, PhaseSampler, PhaseState};
use crate::rx::SamplePair;
use crate::time::{ClockSpec, Femtos, UiFraction};
use crate::waveform::Waveform;

pub const DEFAULT_METASTABILITY_WINDOW: Femtos = 10_000;

/// ChaCha words reserved per sample index.
const WORDS_PER_SAMPLE: u128 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ChannelConfig {
    pub phase_offset: UiFraction,
    pub jitter_sigma: UiFraction,
    /// RX clock frequency offset in parts per billion; positive means the RX
    /// clock runs slow (its period is longer).
    pub freq_offset_ppb: i64,
    pub metastability_window: Femtos,
    pub seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            phase_offset: UiFraction::ZERO,
            jitter_sigma: UiFraction::ZERO,
            freq_offset_ppb: 0,
            metastability_window: DEFAULT_METASTABILITY_WINDOW,
            seed: 0,
        }
    }
}

impl ChannelConfig {
    /// No impairments at all, including no metastability band.
    pub fn ideal() -> Self {
        ChannelConfig { metastability_window: 0, ..Self::default() }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        ChannelConfig { seed, ..self }
    }

    pub fn ppm(ppm: f64) -> i64 {
        libm::round(ppm * 1000.0) as i64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ChannelError {
    #[error("sample at {t} fs outside waveform [{start}, {end})")]
    OutOfRange { t: Femtos, start: Femtos, end: Femtos },
    #[error("negative jitter sigma or metastability window")]
    InvalidConfig,
}

/// One comparator decision with its diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleOutcome {
    pub bit: bool,
    pub instant: Femtos,
    pub metastable: bool,
}

/// Stateful sampler holding the two random streams.
#[derive(Debug, Clone)]
pub struct Comparator {
    cfg: ChannelConfig,
    jitter: ChaCha8Rng,
    coin: ChaCha8Rng,
    pub metastable_count: u64,
}

impl Comparator {
    pub fn new(cfg: ChannelConfig) -> Result<Self, ChannelError> {
        if cfg.jitter_sigma.0 < 0 || cfg.metastability_window < 0 {
            return Err(ChannelError::InvalidConfig);
        }
        let jitter = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut coin = jitter.clone();
        coin.set_stream(1);
        Ok(Comparator { cfg, jitter, coin, metastable_count: 0 })
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.cfg
    }

    /// Jitter for sample `index`, in femtoseconds.
    pub fn jitter_fs(&mut self, index: u64, ui: Femtos) -> Femtos {
        if self.cfg.jitter_sigma.0 == 0 {
            return 0;
        }
        self.jitter.set_word_pos(u128::from(index) * WORDS_PER_SAMPLE);
        let z: f64 = StandardNormal.sample(&mut self.jitter);
        let sigma = self.cfg.jitter_sigma.to_fs(ui) as f64;
        libm::round(z * sigma) as Femtos
    }

    pub fn sample(&mut self, w: &Waveform, t: Femtos, index: u64) -> Result<SampleOutcome, ChannelError> {
        if t < w.start() || t >= w.end() {
            return Err(ChannelError::OutOfRange { t, start: w.start(), end: w.end() });
        }
        let ui = w.ui();
        let instant = t + self.cfg.phase_offset.to_fs(ui) + self.jitter_fs(index, ui);
        let window = self.cfg.metastability_window;
        let near = window > 0 && w.distance_to_transition(instant).is_some_and(|d| d < window);
        let bit = if near {
            self.metastable_count += 1;
            self.coin.set_word_pos(u128::from(index) * WORDS_PER_SAMPLE);
            self.coin.next_u32() & 1 == 1
        } else {
            w.level_at_clamped(instant).bit()
        };
        Ok(SampleOutcome { bit, instant, metastable: near })
    }
}

/// Single comparator decision at nominal instant `t` for sample `index`.
pub fn sample(w: &Waveform, t: Femtos, cfg: &ChannelConfig, index: u64) -> Result<bool, ChannelError> {
    Comparator::new(*cfg)?.sample(w, t, index).map(|s| s.bit)
}

/// The RX clock, possibly off-frequency, and the four samples per cycle.
#[derive(Debug, Clone)]
pub struct RxFrontEnd {
    comparator: Comparator,
    clock: ClockSpec,
    t0: Femtos,
    cycle: u64,
}

impl RxFrontEnd {
    /// RX clock whose cycle 0 starts at `t0` with PI code 0.
    pub fn new(cfg: ChannelConfig, clock: ClockSpec, t0: Femtos) -> Result<Self, ChannelError> {
        Ok(RxFrontEnd { comparator: Comparator::new(cfg)?, clock, t0, cycle: 0 })
    }

    pub fn clock(&self) -> ClockSpec {
        self.clock
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn metastable_count(&self) -> u64 {
        self.comparator.metastable_count
    }

    pub fn config(&self) -> &ChannelConfig {
        self.comparator.config()
    }

    /// Start of RX cycle `n` before PI rotation.
    pub fn cycle_start(&self, n: u64) -> Femtos {
        let nominal = i128::from(n) * i128::from(self.clock.period());
        let drift = (nominal * i128::from(self.comparator.cfg.freq_offset_ppb)).div_euclid(1_000_000_000);
        self.t0 + (nominal + drift) as Femtos
    }

    /// Advances the clock without sampling.
    pub fn skip_cycles(&mut self, n: u64) {
        self.cycle += n;
    }

    /// Skips ahead to the first cycle starting at or after `t`.
    pub fn skip_until(&mut self, t: Femtos) {
        if self.cycle_start(self.cycle) >= t {
            return;
        }
        let period = self.clock.period() as f64 * (1.0 + self.comparator.cfg.freq_offset_ppb as f64 * 1e-9);
        let guess = ((t - self.t0) as f64 / period) as u64;
        let mut n = guess.saturating_sub(2).max(self.cycle);
        while self.cycle_start(n) < t {
            n += 1;
        }
        self.cycle = n;
    }

    /// Nominal (jitter-free, offset-free) even sampling instant of the next
    /// cycle.
    pub fn next_even_instant(&self, phase: &PhaseState) -> Femtos {
        self.cycle_start(self.cycle) + phase.offset_fs(self.clock)
    }

    /// Latest waveform time the next cycle may touch, jitter aside.
    pub fn next_cycle_end(&self, phase: &PhaseState) -> Femtos {
        self.next_even_instant(phase) + self.clock.period()
    }

    pub fn sample_cycle_on(&mut self, w: &Waveform, phase: &PhaseState) -> Result<CycleSamples, ChannelError> {
        let base = self.next_even_instant(phase);
        let q = self.clock.period() / 4;
        let idx = self.cycle * 4;
        let mut s = [false; 4];
        for (k, slot) in s.iter_mut().enumerate() {
            *slot = self.comparator.sample(w, base + q * k as Femtos, idx + k as u64)?.bit;
        }
        self.cycle += 1;
        Ok(CycleSamples { data: SamplePair { even: s[0], odd: s[2] }, edges: [s[1], s[3]] })
    }

    /// Offset of the next even sampling instant (including the static phase
    /// offset, excluding jitter) from the nearest UI centre of a waveform
    /// whose bit grid starts at `origin`.
    pub fn phase_error_on(&self, origin: Femtos, phase: &PhaseState) -> Femtos {
        let ui = self.clock.ui();
        let t = self.next_even_instant(phase) + self.config().phase_offset.to_fs(ui);
        let e = (t - origin - ui / 2).rem_euclid(ui);
        if e >= ui / 2 {
            e - ui
        } else {
            e
        }
    }
}

/// A front end bound to a fixed waveform, for running the CDR standalone.
#[derive(Debug, Clone)]
pub struct WaveformSampler {
    pub wave: Waveform,
    pub front_end: RxFrontEnd,
}

impl WaveformSampler {
    pub fn new(wave: Waveform, cfg: ChannelConfig, clock: ClockSpec) -> Result<Self, ChannelError> {
        let front_end = RxFrontEnd::new(cfg, clock, wave.origin())?;
        Ok(WaveformSampler { wave, front_end })
    }
}

impl PhaseSampler for WaveformSampler {
    fn sample_cycle(&mut self, phase: &PhaseState) -> CycleSamples {
        self.front_end
            .sample_cycle_on(&self.wave, phase)
            .expect("sampling stayed within the waveform")
    }

    fn phase_error_fs(&self, phase: &PhaseState) -> Option<Femtos> {
        Some(self.front_end.phase_error_on(self.wave.origin(), phase))
    }

    fn clock(&self) -> ClockSpec {
        self.front_end.clock()
    }
}
