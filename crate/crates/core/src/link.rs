// SPDX-License-Identifier: Apache-2.0

//! Two-chip link simulation: configuration registers, the three-wire GPIO
//! warm-up handshake, the TX FIFO, the RX buffer and duty-cycled framing.
//!
//! Time advances in TX word slots. Each slot the TX processor and controller
//! run, the serializer appends one word (or holds the line), and the RX side
//! then consumes every RX clock cycle the waveform now covers. The RX lags
//! the TX by well under a slot, and TX reads its GPIO inputs through a
//! one-slot synchronizer, so every GPIO level either side reads was already
//! decided.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cdr::{Cdr, InvalidDivider, LoopFilterState, PhaseState, LOCK_TOLERANCE_CODES, LOCK_WINDOWS};
use crate::channel::{ChannelConfig, ChannelError, RxFrontEnd};
use crate::codec::Disparity;
use crate::energy::{energy_from_sim, Accounting, ModeDurations, PowerProfile};
use crate::rx::{decode_word, DecodedWord, DecoderPipeline, RxDatapath, RxMode};
use crate::time::{ClockSpec, Femtos, FS_PER_S, PI_CODES};
use crate::trace::{event, Domain, NullSink, TraceRecord, TraceSink};
use crate::tx::{trace_word, tx_step, TxConfig, TxMode, TxState};
use crate::waveform::{Level, Waveform};
use crate::word::WordKind;

/// Per-chip configuration registers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChipConfig {
    pub comm_en: bool,
    pub warm_en: bool,
    pub rx_buffer_bytes: usize,
    pub rx_buffer_addr: u32,
    pub fifo_depth: usize,
    pub fixed_wait_cycles: u32,
}

impl Default for ChipConfig {
    fn default() -> Self {
        ChipConfig {
            comm_en: false,
            warm_en: false,
            rx_buffer_bytes: 16 * 1024,
            rx_buffer_addr: 0x1C00_8000,
            fifo_depth: 8,
            fixed_wait_cycles: 1024,
        }
    }
}

/// How the RX decides its clock is ready.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WarmMode {
    /// Wait `fixed_wait_cycles` RX cycles.
    #[default]
    FixedWait,
    /// Wait until the lock criterion holds, giving up after `budget_cycles`.
    LockCriterion { budget_cycles: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GpioLine {
    WarmupReq,
    ClockReady,
    CommReady,
}

impl GpioLine {
    pub fn as_str(self) -> &'static str {
        match self {
            GpioLine::WarmupReq => event::WARMUP_REQ,
            GpioLine::ClockReady => event::CLOCK_READY,
            GpioLine::CommReady => event::COMM_READY,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// The three GPIO lines between the chips, kept as level histories so that
/// either side can read a line as it was at some earlier instant.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GpioBus {
    edges: [Vec<(Femtos, bool)>; 3],
}

impl GpioBus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Drives `line` to `level` from `t` on. Returns false if the line was
    /// already there.
    pub fn set(&mut self, line: GpioLine, level: bool, t: Femtos) -> bool {
        if self.level(line) == level {
            return false;
        }
        self.edges[line.index()].push((t, level));
        true
    }

    /// Current driven level.
    pub fn level(&self, line: GpioLine) -> bool {
        self.edges[line.index()].last().is_some_and(|e| e.1)
    }

    pub fn level_at(&self, line: GpioLine, t: Femtos) -> bool {
        self.edges[line.index()].iter().rev().find(|e| e.0 <= t).is_some_and(|e| e.1)
    }

    pub fn edges(&self, line: GpioLine) -> &[(Femtos, bool)] {
        &self.edges[line.index()]
    }

    /// Drops history older than `t`, keeping the level in force at `t`.
    fn prune(&mut self, t: Femtos) {
        for edges in &mut self.edges {
            let keep_from = edges.iter().rposition(|e| e.0 <= t).unwrap_or(0);
            edges.drain(..keep_from);
        }
    }

    pub fn is_quiet(&self) -> bool {
        self.edges.iter().all(Vec::is_empty)
    }
}

/// Steps of one warm-up handshake, in the order they must occur.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum HandshakeStep {
    WarmupReq,
    RxWarmUp,
    ClockReady,
    UdmaConfig,
    CommReady,
    StartFlit,
}

impl HandshakeStep {
    pub const ORDER: [HandshakeStep; 6] = [
        HandshakeStep::WarmupReq,
        HandshakeStep::RxWarmUp,
        HandshakeStep::ClockReady,
        HandshakeStep::UdmaConfig,
        HandshakeStep::CommReady,
        HandshakeStep::StartFlit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            HandshakeStep::WarmupReq => "warmup_req",
            HandshakeStep::RxWarmUp => "rx_warm_up",
            HandshakeStep::ClockReady => "clock_ready",
            HandshakeStep::UdmaConfig => "udma_config",
            HandshakeStep::CommReady => "comm_ready",
            HandshakeStep::StartFlit => "start_flit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HandshakeEvent {
    pub time: Femtos,
    pub step: HandshakeStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("{step:?} at {time} fs is out of order (expected {expected:?})")]
pub struct ProtocolViolation {
    pub time: Femtos,
    pub step: HandshakeStep,
    pub expected: HandshakeStep,
}

/// Checks that handshake events follow the protocol order, cycle after
/// cycle. A cycle may be cut short (an aborted warm-up) and restart with a
/// new `WarmupReq`.
pub fn check_protocol(events: &[HandshakeEvent]) -> Result<(), ProtocolViolation> {
    let mut next = 0usize;
    let mut last_time = Femtos::MIN;
    for e in events {
        let expected = HandshakeStep::ORDER[next % HandshakeStep::ORDER.len()];
        let restart = e.step == HandshakeStep::WarmupReq;
        if (e.step != expected && !restart) || e.time < last_time {
            return Err(ProtocolViolation { time: e.time, step: e.step, expected });
        }
        next = if restart { 1 } else { next + 1 };
        last_time = e.time;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkConfig {
    pub clock: ClockSpec,
    pub tx: ChipConfig,
    pub rx: ChipConfig,
    pub channel: ChannelConfig,
    pub divider_n: u32,
    /// Starting PI code; drawn from the run seed when `None`.
    pub initial_pi_code: Option<u8>,
    pub gpio_delay: Femtos,
    pub warm_mode: WarmMode,
    /// Duty-cycle period measured from one `warmup_req` rise to the next.
    /// `None` starts the next cycle as soon as the link is idle again.
    pub cycle_period: Option<Femtos>,
    pub power: PowerProfile,
    pub accounting: Accounting,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            clock: ClockSpec::nominal(),
            tx: ChipConfig::default(),
            rx: ChipConfig::default(),
            channel: ChannelConfig::default(),
            divider_n: 4,
            initial_pi_code: None,
            gpio_delay: 0,
            warm_mode: WarmMode::FixedWait,
            cycle_period: None,
            power: PowerProfile::default(),
            accounting: Accounting::Line,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum LinkError {
    #[error("rx_buffer_bytes must be a positive multiple of 4, got {0}")]
    BufferSize(usize),
    #[error("fifo_depth must be at least 2, got {0}")]
    FifoDepth(usize),
    #[error(transparent)]
    Divider(#[from] InvalidDivider),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("gpio delay must be non-negative")]
    GpioDelay,
    #[error("simulation made no progress after {0} word slots")]
    Stalled(u64),
    #[error(transparent)]
    Protocol(#[from] ProtocolViolation),
}

impl LinkConfig {
    pub fn validate(&self) -> Result<(), LinkError> {
        for chip in [&self.tx, &self.rx] {
            if chip.fifo_depth < 2 {
                return Err(LinkError::FifoDepth(chip.fifo_depth));
            }
        }
        let b = self.rx.rx_buffer_bytes;
        if b == 0 || !b.is_multiple_of(4) {
            return Err(LinkError::BufferSize(b));
        }
        if self.gpio_delay < 0 {
            return Err(LinkError::GpioDelay);
        }
        LoopFilterState::new(self.divider_n)?;
        RxFrontEnd::new(self.channel, self.clock, 0)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub payload_out: Vec<u8>,
    pub bit_errors: u64,
    pub corrupt_words: u64,
    pub durations: ModeDurations,
    pub total_time: Femtos,
    /// Duty cycles started.
    pub duty_cycles: u64,
    /// Duty cycles whose frame ended with a detected stop flit.
    pub cycles_completed: u64,
    pub effective_bandwidth_bps: f64,
    pub energy_j: f64,
    pub padding_bytes: usize,
    pub bytes_popped: u64,
    pub data_words_sent: u64,
    pub bytes_landed: u64,
    /// Data words sent but never delivered to the RX buffer.
    pub words_lost: u64,
    pub start_flits_sent: u64,
    pub stop_flits_sent: u64,
    pub start_flits_detected: u64,
    pub stop_flits_detected: u64,
    pub lock_failures: u64,
    pub missing_stops: u64,
    pub protocol_violations: Vec<ProtocolViolation>,
    pub handshake: Vec<HandshakeEvent>,
    pub metastable_samples: u64,
    pub final_pi_code: u8,
}

impl SimReport {
    /// Handshake order held and every warm-up ended locked. Frames lost to
    /// bit errors (a missed start or stop flit) show up as bit errors.
    pub fn protocol_ok(&self) -> bool {
        self.protocol_violations.is_empty() && self.lock_failures == 0
    }

    /// Start flits sent that the RX never saw.
    pub fn frames_missed(&self) -> u64 {
        self.start_flits_sent.saturating_sub(self.start_flits_detected)
    }

    /// 0 clean, 1 bit errors, 2 protocol or lock failure.
    pub fn exit_code(&self) -> i32 {
        if !self.protocol_ok() {
            2
        } else if self.bit_errors > 0 {
            1
        } else {
            0
        }
    }
}

/// Differing bits, with every byte missing or extra counted as 8 errors.
pub fn bit_errors(sent: &[u8], received: &[u8]) -> u64 {
    let common: u64 = sent.iter().zip(received).map(|(a, b)| u64::from((a ^ b).count_ones())).sum();
    common + 8 * sent.len().abs_diff(received.len()) as u64
}

/// Deterministic pseudo-random payload.
pub fn random_payload(len: usize, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = alloc::vec![0u8; len];
    rng.fill_bytes(&mut out);
    out
}

const PI_SEED_SALT: u64 = 0x5049_5F43_4F44_4521;

fn initial_code(cfg: &LinkConfig, seed: u64) -> i64 {
    match cfg.initial_pi_code {
        Some(c) => i64::from(c) % PI_CODES,
        None => i64::from(ChaCha8Rng::seed_from_u64(seed ^ PI_SEED_SALT).next_u32() % PI_CODES as u32),
    }
}

/// Gap between a stop flit and the next `warmup_req`, so the RX sees the
/// request fall.
const REARM_SLOTS: i64 = 4;
/// RX waits this long after `warmup_req` falls for a stop flit.
const STOP_TIMEOUT_SLOTS: i64 = 2;
/// Health check at the end of a fixed wait: a quarter UI.
const FIXED_WAIT_TOLERANCE_CODES: i64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TxProc {
    Idle,
    WaitReady { deadline: Femtos },
    Sending,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RxProc {
    Off,
    WaitClock { elapsed: u64, good_windows: u32, window_ok: bool },
    Config,
    Ready,
    Active,
    Failed,
}

struct Engine<'a, S: TraceSink + ?Sized> {
    cfg: LinkConfig,
    sink: &'a mut S,
    slot: Femtos,
    wave: Waveform,
    gpio: GpioBus,
    handshake: Vec<HandshakeEvent>,

    // TX chip
    words: Vec<[u8; 4]>,
    next_word: usize,
    cycle_words_left: usize,
    fifo: VecDeque<[u8; 4]>,
    tx_state: TxState,
    tx_regs: TxConfig,
    tx_proc: TxProc,
    next_cycle_start: Femtos,
    t_req: Femtos,
    t_start: Femtos,

    // RX chip
    fe: RxFrontEnd,
    cdr: Cdr,
    dp: RxDatapath,
    rx_proc: RxProc,
    rx_warm_en: bool,
    rx_det_en: bool,
    stop_deadline: Option<Femtos>,
    rx_rd: Disparity,
    pipeline: DecoderPipeline,
    buffer: Vec<u8>,

    report: SimReport,
    payload_out: Vec<u8>,
}

impl<'a, S: TraceSink + ?Sized> Engine<'a, S> {
    fn new(cfg: &LinkConfig, words: Vec<[u8; 4]>, seed: u64, sink: &'a mut S) -> Result<Self, LinkError> {
        cfg.validate()?;
        let channel = cfg.channel.with_seed(seed);
        let clock = cfg.clock;
        let filter = LoopFilterState::new(cfg.divider_n)?;
        Ok(Engine {
            cfg: *cfg,
            sink,
            slot: clock.word_slot(),
            wave: Waveform::new(0, clock.ui(), Level::Low),
            gpio: GpioBus::new(),
            handshake: Vec::new(),
            words,
            next_word: 0,
            cycle_words_left: 0,
            fifo: VecDeque::with_capacity(cfg.tx.fifo_depth),
            tx_state: TxState::default(),
            tx_regs: TxConfig { clock, ..TxConfig::default() },
            tx_proc: TxProc::Idle,
            next_cycle_start: 0,
            t_req: 0,
            t_start: 0,
            fe: RxFrontEnd::new(channel, clock, 0)?,
            cdr: Cdr::new(PhaseState::new(initial_code(cfg, seed)), filter),
            dp: RxDatapath::new(),
            rx_proc: RxProc::Off,
            rx_warm_en: false,
            rx_det_en: false,
            stop_deadline: None,
            rx_rd: Disparity::Negative,
            pipeline: DecoderPipeline::default(),
            buffer: Vec::with_capacity(cfg.rx.rx_buffer_bytes),
            report: SimReport::default(),
            payload_out: Vec::new(),
        })
    }

    fn trace(&mut self, time: Femtos, domain: Domain, event: &'static str, payload: impl FnOnce() -> String) {
        if self.sink.enabled() {
            self.sink.record(TraceRecord { time, domain, event, payload: payload() });
        }
    }

    fn set_gpio(&mut self, line: GpioLine, level: bool, t: Femtos) {
        if self.gpio.set(line, level, t) {
            self.trace(t, Domain::Gpio, line.as_str(), || String::from(if level { "1" } else { "0" }));
        }
    }

    fn mark(&mut self, time: Femtos, step: HandshakeStep) {
        self.handshake.push(HandshakeEvent { time, step });
    }

    fn buffer_words(&self) -> usize {
        self.cfg.rx.rx_buffer_bytes / 4
    }

    fn ready_timeout(&self) -> Femtos {
        let wait = match self.cfg.warm_mode {
            WarmMode::FixedWait => u64::from(self.cfg.rx.fixed_wait_cycles),
            WarmMode::LockCriterion { budget_cycles } => budget_cycles,
        };
        (wait as Femtos + 64) * self.cfg.clock.period() + 8 * self.slot + 2 * self.cfg.gpio_delay
    }

    fn tx_idle(&self) -> bool {
        self.tx_proc == TxProc::Idle && self.tx_state.mode == TxMode::Idle
    }

    fn rx_idle(&self) -> bool {
        self.rx_proc == RxProc::Off && self.dp.mode() == RxMode::Idle
    }

    /// One TX word slot starting at `t`.
    fn tx_slot(&mut self, t: Femtos, handshake_only: bool) {
        let seen = t - self.slot - self.cfg.gpio_delay;

        if self.tx_proc == TxProc::Idle
            && self.tx_state.mode == TxMode::Idle
            && (self.next_word < self.words.len() || handshake_only)
            && t >= self.next_cycle_start
            // The previous cycle's ready lines must be seen low first.
            && !self.gpio.level_at(GpioLine::ClockReady, seen)
            && !self.gpio.level_at(GpioLine::CommReady, seen)
        {
            self.tx_regs.warm_en = true;
            self.set_gpio(GpioLine::WarmupReq, true, t);
            self.mark(t, HandshakeStep::WarmupReq);
            self.t_req = t;
            self.cycle_words_left = self.buffer_words().min(self.words.len() - self.next_word);
            self.tx_proc = TxProc::WaitReady { deadline: t + self.ready_timeout() };
            self.report.duty_cycles += 1;
        }

        if let TxProc::WaitReady { deadline } = self.tx_proc {
            if self.gpio.level_at(GpioLine::CommReady, seen) {
                self.tx_regs.comm_en = true;
                self.tx_proc = TxProc::Sending;
            } else if t >= deadline {
                self.tx_regs.warm_en = false;
                self.set_gpio(GpioLine::WarmupReq, false, t);
                self.report.words_lost += self.cycle_words_left as u64;
                self.next_word += self.cycle_words_left;
                self.cycle_words_left = 0;
                self.report.durations.warm_up += t - self.t_req;
                self.tx_proc = TxProc::Idle;
                self.next_cycle_start = self.after_cycle(t);
            }
        }

        if self.tx_proc == TxProc::Sending {
            while self.fifo.len() < self.cfg.tx.fifo_depth && self.cycle_words_left > 0 {
                self.fifo.push_back(self.words[self.next_word]);
                self.next_word += 1;
                self.cycle_words_left -= 1;
            }
        }

        let (state, out) = tx_step(self.tx_state, &self.tx_regs, self.fifo.front().copied());
        self.tx_state = state;
        if out.fifo_pop {
            self.fifo.pop_front();
            self.report.bytes_popped += 4;
        }
        match out.word {
            Some(w) => {
                self.wave.push_bits(w.serial_bits());
                trace_word(self.sink, t, &w);
                match w.kind() {
                    WordKind::StartFlit => {
                        self.report.start_flits_sent += 1;
                        self.t_start = t;
                        self.report.durations.warm_up += t - self.t_req;
                        self.mark(t, HandshakeStep::StartFlit);
                    }
                    WordKind::DataBody => self.report.data_words_sent += 1,
                    WordKind::StopFlit => {
                        let end = t + self.slot;
                        self.report.stop_flits_sent += 1;
                        self.report.durations.data_comm += end - self.t_start;
                        self.tx_regs.comm_en = false;
                        self.tx_regs.warm_en = false;
                        self.set_gpio(GpioLine::WarmupReq, false, end);
                        self.tx_proc = TxProc::Idle;
                        self.next_cycle_start = self.after_cycle(end);
                    }
                    _ => {}
                }
            }
            None => self.wave.hold_until(t + self.slot),
        }
    }

    fn after_cycle(&self, end: Femtos) -> Femtos {
        let earliest = end + REARM_SLOTS * self.slot;
        let due = self.cfg.cycle_period.map_or(earliest, |p| self.t_req + p).max(earliest);
        // Cycles begin on slot boundaries.
        due.div_euclid(self.slot) * self.slot + if due.rem_euclid(self.slot) == 0 { 0 } else { self.slot }
    }

    /// Consumes every RX cycle the waveform now covers.
    fn rx_catch_up(&mut self) -> Result<(), LinkError> {
        let guard = self.slot / 2;
        loop {
            let phase = self.cdr.phase();
            if self.fe.next_cycle_end(&phase) + guard > self.wave.end() {
                return Ok(());
            }
            let tc = self.fe.cycle_start(self.fe.cycle());
            self.rx_processor(tc);
            if self.rx_idle() {
                self.fe.skip_cycles(1);
                continue;
            }
            self.rx_cycle(tc)?;
        }
    }

    fn rx_control(&mut self, tc: Femtos) {
        if self.dp.control(self.rx_warm_en, self.rx_det_en) {
            let m = self.dp.mode();
            self.trace(tc, Domain::Rx, event::RX_MODE, || String::from(m.as_str()));
            if m == RxMode::WarmUp && self.rx_warm_en && !self.rx_det_en {
                self.mark(tc, HandshakeStep::RxWarmUp);
            }
        }
    }

    /// The RX processor: reacts to `warmup_req` and runs the handshake.
    fn rx_processor(&mut self, tc: Femtos) {
        let req = self.gpio.level_at(GpioLine::WarmupReq, tc - self.cfg.gpio_delay);

        if !req && self.rx_proc != RxProc::Off {
            self.rx_warm_en = false;
            self.rx_det_en = false;
            self.set_gpio(GpioLine::ClockReady, false, tc);
            self.set_gpio(GpioLine::CommReady, false, tc);
            self.rx_proc = RxProc::Off;
            if self.dp.mode() == RxMode::DataComm {
                self.stop_deadline = Some(tc + STOP_TIMEOUT_SLOTS * self.slot);
            }
            self.rx_control(tc);
            return;
        }

        match self.rx_proc {
            RxProc::Off => {
                if let Some(deadline) = self.stop_deadline {
                    if self.dp.mode() == RxMode::DataComm && tc > deadline {
                        self.report.missing_stops += 1;
                        self.trace(tc, Domain::Rx, event::MISSING_STOP, String::new);
                        self.dp.abort_frame(false, false);
                        self.end_frame();
                        self.rx_control(tc);
                    }
                    if self.dp.mode() != RxMode::DataComm {
                        self.stop_deadline = None;
                    }
                }
                if req && self.dp.mode() != RxMode::DataComm {
                    self.rx_warm_en = true;
                    self.rx_proc = RxProc::WaitClock { elapsed: 0, good_windows: 0, window_ok: true };
                    self.rx_control(tc);
                }
            }
            RxProc::WaitClock { elapsed, good_windows, .. } => {
                let done = match self.cfg.warm_mode {
                    WarmMode::FixedWait => {
                        if elapsed < u64::from(self.cfg.rx.fixed_wait_cycles) {
                            None
                        } else {
                            let err = self.phase_error_codes();
                            Some(err.abs() <= FIXED_WAIT_TOLERANCE_CODES)
                        }
                    }
                    WarmMode::LockCriterion { budget_cycles } => {
                        if good_windows >= LOCK_WINDOWS {
                            Some(true)
                        } else if elapsed >= budget_cycles {
                            Some(false)
                        } else {
                            None
                        }
                    }
                };
                match done {
                    Some(true) => {
                        self.set_gpio(GpioLine::ClockReady, true, tc);
                        self.mark(tc, HandshakeStep::ClockReady);
                        self.rx_proc = RxProc::Config;
                    }
                    Some(false) => {
                        self.report.lock_failures += 1;
                        let code = self.cdr.phase().pi_code();
                        self.trace(tc, Domain::Cdr, event::LOCK_FAILURE, || format!("pi_code={code}"));
                        self.rx_proc = RxProc::Failed;
                    }
                    None => {}
                }
            }
            RxProc::Config => {
                let (addr, bytes) = (self.cfg.rx.rx_buffer_addr, self.cfg.rx.rx_buffer_bytes);
                self.trace(tc, Domain::Rx, event::UDMA_CONFIG, || format!("addr=0x{addr:08X} bytes={bytes}"));
                self.mark(tc, HandshakeStep::UdmaConfig);
                self.buffer.clear();
                self.rx_det_en = true;
                self.rx_control(tc);
                self.rx_proc = RxProc::Ready;
            }
            RxProc::Ready => {
                self.set_gpio(GpioLine::CommReady, true, tc);
                self.mark(tc, HandshakeStep::CommReady);
                self.rx_proc = RxProc::Active;
            }
            RxProc::Active | RxProc::Failed => {}
        }
    }

    fn phase_error_codes(&self) -> i64 {
        let err = self.fe.phase_error_on(self.wave.origin(), &self.cdr.phase());
        let step = self.cfg.clock.pi_step();
        // Round away from zero so that any excess counts.
        if err >= 0 {
            (err + step - 1) / step
        } else {
            -((-err + step - 1) / step)
        }
    }

    fn rx_cycle(&mut self, tc: Femtos) -> Result<(), LinkError> {
        let phase = self.cdr.phase();
        if let RxProc::WaitClock { elapsed, good_windows, window_ok } = self.rx_proc {
            let in_window = self.cdr.filter().cycle_count;
            let ok = self.phase_error_codes().abs() <= LOCK_TOLERANCE_CODES;
            let window_ok = if in_window == 0 { ok } else { window_ok && ok };
            let good_windows = if in_window == 3 {
                if window_ok {
                    good_windows + 1
                } else {
                    0
                }
            } else {
                good_windows
            };
            self.rx_proc = RxProc::WaitClock { elapsed: elapsed + 1, good_windows, window_ok };
        }

        let samples = self.fe.sample_cycle_on(&self.wave, &phase)?;
        if let Some(rec) = self.cdr.push_cycle(samples) {
            self.trace(tc, Domain::Cdr, event::WINDOW, || {
                format!("index={} net={} acc={} delta={} pi_code={}", rec.index, rec.net, rec.accumulator, rec.delta, rec.pi_code)
            });
        }

        let out = self.dp.step(samples.data, self.rx_warm_en, self.rx_det_en);
        if let Some(d) = out.start {
            self.report.start_flits_detected += 1;
            self.rx_rd = d.disparity;
            self.buffer.clear();
            let rd = if d.disparity == Disparity::Negative { '-' } else { '+' };
            self.trace(tc, Domain::Rx, event::DETECT_START, || format!("shift={} rd={rd}", u8::from(d.shift)));
        }
        if let Some(w) = out.word {
            let (decoded, rd) = decode_word(&w, self.rx_rd);
            self.rx_rd = rd;
            if let Some(prev) = self.pipeline.push(Some(decoded)) {
                self.land(tc, prev);
            }
        }
        if out.stop {
            self.report.stop_flits_detected += 1;
            self.report.cycles_completed += 1;
            self.trace(tc, Domain::Rx, event::DETECT_STOP, String::new);
            self.end_frame();
        }
        if out.mode_changed {
            let m = self.dp.mode();
            self.trace(tc, Domain::Rx, event::RX_MODE, || String::from(m.as_str()));
        }
        Ok(())
    }

    fn land(&mut self, tc: Femtos, d: DecodedWord) {
        if self.buffer.len() + 4 > self.cfg.rx.rx_buffer_bytes {
            return;
        }
        let bytes = d.payload();
        self.buffer.extend_from_slice(&bytes);
        if d.corrupt() {
            self.report.corrupt_words += 1;
            self.trace(tc, Domain::Rx, event::CORRUPT, || hex4(bytes));
        } else {
            self.report.bytes_landed += 4;
            self.trace(tc, Domain::Rx, event::WORD, || hex4(bytes));
        }
    }

    /// Drains the decoder and hands the buffer to the processor.
    fn end_frame(&mut self) {
        if let Some(last) = self.pipeline.flush() {
            let tc = self.fe.cycle_start(self.fe.cycle());
            self.land(tc, last);
        }
        self.payload_out.append(&mut self.buffer);
    }

    fn idle_jump(&mut self, t: Femtos) -> Femtos {
        if self.next_word < self.words.len()
            && self.tx_idle()
            && self.rx_idle()
            && self.stop_deadline.is_none()
            && self.next_cycle_start > t
        {
            self.wave.hold_until(self.next_cycle_start);
            self.fe.skip_until(self.next_cycle_start - self.slot);
            return self.next_cycle_start;
        }
        t
    }

    fn finish(mut self, payload_len: usize, padding: usize, end: Femtos) -> SimReport {
        let mut r = core::mem::take(&mut self.report);
        let total = match self.cfg.cycle_period {
            Some(p) if r.duty_cycles > 0 => end.max(self.t_req + p),
            _ => end,
        };
        r.total_time = total;
        r.durations.idle = total - r.durations.warm_up - r.durations.data_comm;
        let words_sent = self.words.len() as u64 - r.words_lost;
        let delivered = self.payload_out.len() as u64 / 4;
        r.words_lost += words_sent.saturating_sub(delivered);
        self.payload_out.truncate(payload_len);
        r.payload_out = self.payload_out;
        r.padding_bytes = padding;
        r.metastable_samples = self.fe.metastable_count();
        r.final_pi_code = self.cdr.phase().pi_code();
        r.energy_j = energy_from_sim(&r.durations, &self.cfg.power, self.cfg.accounting);
        r.effective_bandwidth_bps = if total > 0 {
            (r.bytes_landed.min(payload_len as u64) * 8) as f64 / (total as f64 / FS_PER_S as f64)
        } else {
            0.0
        };
        if let Err(v) = check_protocol(&self.handshake) {
            r.protocol_violations.push(v);
        }
        r.handshake = self.handshake;
        r
    }

    fn prune(&mut self, t: Femtos) {
        let keep = t - 4 * self.slot;
        if keep > self.wave.start() + 64 * self.slot {
            self.wave.discard_before(keep);
            self.gpio.prune(keep - self.cfg.gpio_delay);
        }
    }
}

impl Default for SimReport {
    fn default() -> Self {
        SimReport {
            payload_out: Vec::new(),
            bit_errors: 0,
            corrupt_words: 0,
            durations: ModeDurations::default(),
            total_time: 0,
            duty_cycles: 0,
            cycles_completed: 0,
            effective_bandwidth_bps: 0.0,
            energy_j: 0.0,
            padding_bytes: 0,
            bytes_popped: 0,
            data_words_sent: 0,
            bytes_landed: 0,
            words_lost: 0,
            start_flits_sent: 0,
            stop_flits_sent: 0,
            start_flits_detected: 0,
            stop_flits_detected: 0,
            lock_failures: 0,
            missing_stops: 0,
            protocol_violations: Vec::new(),
            handshake: Vec::new(),
            metastable_samples: 0,
            final_pi_code: 0,
        }
    }
}

fn hex4(b: [u8; 4]) -> String {
    format!("{:02X}{:02X}{:02X}{:02X}", b[0], b[1], b[2], b[3])
}

/// Runs the full link on `payload`, padding it with zeros to whole words.
pub fn run_transfer<S: TraceSink + ?Sized>(
    payload: &[u8],
    cfg: &LinkConfig,
    seed: u64,
    sink: &mut S,
) -> Result<SimReport, LinkError> {
    let padding = (4 - payload.len() % 4) % 4;
    let words: Vec<[u8; 4]> = payload
        .chunks(4)
        .map(|c| {
            let mut w = [0u8; 4];
            w[..c.len()].copy_from_slice(c);
            w
        })
        .collect();
    let total_words = words.len() as u64;
    let mut e = Engine::new(cfg, words, seed, sink)?;

    let per_cycle = e.buffer_words() as u64
        + (e.ready_timeout() / e.slot) as u64
        + STOP_TIMEOUT_SLOTS as u64
        + REARM_SLOTS as u64
        + 16;
    let cycles = total_words.div_ceil(e.buffer_words() as u64);
    let limit = cycles * per_cycle + 64;

    let mut t: Femtos = 0;
    let mut active_slots = 0u64;
    let mut drain = 0;
    loop {
        let finished = e.next_word >= e.words.len() && e.tx_idle() && e.rx_idle() && e.stop_deadline.is_none();
        if finished {
            // A couple of quiet slots so every record lands before the end.
            drain += 1;
            if drain > 2 || total_words == 0 {
                break;
            }
        }
        e.tx_slot(t, false);
        t += e.slot;
        e.rx_catch_up()?;
        e.prune(t);
        t = e.idle_jump(t);
        active_slots += 1;
        if active_slots > limit {
            return Err(LinkError::Stalled(active_slots));
        }
    }
    let mut report = e.finish(payload.len(), padding, t);
    report.bit_errors = bit_errors(payload, &report.payload_out);
    Ok(report)
}

/// Runs a single warm-up handshake (no data) and returns its events and the
/// GPIO history. With `warm_en` false nothing is requested and the bus stays
/// quiet.
pub fn run_handshake<S: TraceSink + ?Sized>(
    cfg: &LinkConfig,
    warm_en: bool,
    sink: &mut S,
) -> Result<(Vec<HandshakeEvent>, GpioBus), LinkError> {
    let mut e = Engine::new(cfg, Vec::new(), cfg.channel.seed, sink)?;
    let mut t: Femtos = 0;
    let limit = (e.ready_timeout() / e.slot) as u64 + 16;
    for _ in 0..limit {
        if warm_en && e.tx_proc == TxProc::Idle && e.tx_state.mode == TxMode::Idle && e.handshake.is_empty() {
            e.tx_slot(t, true);
        } else {
            e.tx_slot(t, false);
        }
        t += e.slot;
        e.rx_catch_up()?;
        if e.tx_proc == TxProc::Sending {
            break;
        }
    }
    check_protocol(&e.handshake)?;
    Ok((e.handshake, e.gpio))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BerResult {
    pub bits: u64,
    pub errors: u64,
    pub ber: f64,
    /// Wilson score interval at 95 % confidence.
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Wilson score interval for `errors` out of `n` trials.
pub fn wilson_interval(errors: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = errors as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * libm::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    // The bounds are exactly 0 and 1 at the extremes; the formula leaves
    // rounding residue there.
    let lo = if errors == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if errors as f64 == n { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

pub const Z_95: f64 = 1.959_963_984_540_054;

/// Streams `bits` of random payload over the link with the given channel
/// and counts bit errors after decoding.
pub fn measure_ber(bits: u64, channel: &ChannelConfig, seed: u64) -> Result<BerResult, LinkError> {
    let cfg = LinkConfig { channel: *channel, ..LinkConfig::default() };
    let (r, payload_bits) = ber_run(bits, &cfg, seed, &mut NullSink)?;
    let (ci_low, ci_high) = wilson_interval(r.bit_errors, payload_bits, Z_95);
    Ok(BerResult {
        bits: payload_bits,
        errors: r.bit_errors,
        ber: r.bit_errors as f64 / payload_bits as f64,
        ci_low,
        ci_high,
    })
}

/// The transfer behind [`measure_ber`], for callers that want the full
/// report (error positions, durations).
pub fn ber_run<S: TraceSink + ?Sized>(
    bits: u64,
    cfg: &LinkConfig,
    seed: u64,
    sink: &mut S,
) -> Result<(SimReport, u64), LinkError> {
    let bytes = bits.div_ceil(8) as usize;
    let payload = random_payload(bytes, seed);
    let r = run_transfer(&payload, cfg, seed, sink)?;
    Ok((r, bytes as u64 * 8))
}
