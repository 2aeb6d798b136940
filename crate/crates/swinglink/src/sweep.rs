// SPDX-License-Identifier: Apache-2.0

//! Parameter sweeps fanned out over a rayon pool. Results come back in input
//! order, so output files do not depend on the thread count.

use rayon::prelude::*;
use serde::Serialize;
use swinglink_core::cdr::{cdr_lock, LoopFilterState, PhaseState};
use swinglink_core::channel::{ChannelConfig, WaveformSampler};
use swinglink_core::codec::Disparity;
use swinglink_core::link::{ber_run, wilson_interval, LinkError, Z_95};
use swinglink_core::time::{UiFraction, CYCLES_PER_WORD, PI_CODES};
use swinglink_core::trace::NullSink;
use swinglink_core::tx::{build_training_word, serialize};

use crate::config::Scenario;

pub const THREADS_ENV: &str = "SWINGLINK_THREADS";

/// A pool sized by `SWINGLINK_THREADS` when set, rayon's default otherwise.
pub fn pool() -> rayon::ThreadPool {
    let n = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()).unwrap_or(0);
    rayon::ThreadPoolBuilder::new().num_threads(n).build().expect("thread pool")
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct BerRow {
    pub jitter_sigma_ui: f64,
    pub bits: u64,
    pub errors: u64,
    pub ber: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub corrupt_words: u64,
    pub frames_missed: u64,
    pub lock_failures: u64,
}

pub fn ber_sweep(s: &Scenario, sigmas: &[f64]) -> Result<Vec<BerRow>, LinkError> {
    pool().install(|| {
        sigmas
            .par_iter()
            .map(|&sigma| {
                let mut cfg = s.link;
                cfg.channel.jitter_sigma = UiFraction::from_ui(sigma);
                let (r, bits) = ber_run(s.ber_bits, &cfg, s.seed, &mut NullSink)?;
                let (ci_low, ci_high) = wilson_interval(r.bit_errors, bits, Z_95);
                Ok(BerRow {
                    jitter_sigma_ui: sigma,
                    bits,
                    errors: r.bit_errors,
                    ber: r.bit_errors as f64 / bits as f64,
                    ci_low,
                    ci_high,
                    corrupt_words: r.corrupt_words,
                    frames_missed: r.frames_missed(),
                    lock_failures: r.lock_failures,
                })
            })
            .collect()
    })
}

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct LockSummary {
    pub initial_code: i64,
    pub locked: bool,
    pub settle_cycles: Option<u64>,
    pub cycles_run: u64,
    pub final_code: u8,
}

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct LockCurveRow {
    pub initial_code: i64,
    pub window: u64,
    pub net: i32,
    pub pi_code: u8,
    pub unwrapped: i64,
}

/// Runs the lock procedure from every PI code on a training stream through
/// the scenario's channel.
pub fn cdr_lock_sweep(
    s: &Scenario,
    budget_cycles: u64,
) -> Result<(Vec<LockSummary>, Vec<LockCurveRow>), LinkError> {
    let filter = LoopFilterState::new(s.link.divider_n)?;
    let clock = s.link.clock;
    let (word, _) = build_training_word(Disparity::Negative);
    // Room for the budget, a whole period of PI rotation and drift at up to
    // a few percent.
    let words = (budget_cycles as usize).div_ceil(CYCLES_PER_WORD as usize);
    let words = words + words / 16 + 4;
    let wave = serialize(&vec![word; words], 0, clock);
    let channel = ChannelConfig { seed: s.seed, ..s.link.channel };

    let results: Result<Vec<_>, LinkError> = pool().install(|| {
        (0..PI_CODES)
            .into_par_iter()
            .map(|code| {
                let mut sampler = WaveformSampler::new(wave.clone(), channel, clock)?;
                let out = cdr_lock(&mut sampler, PhaseState::new(code), filter, budget_cycles);
                let summary = LockSummary {
                    initial_code: code,
                    locked: out.locked,
                    settle_cycles: out.settle_cycles,
                    cycles_run: out.cycles_run,
                    final_code: out.phase.pi_code(),
                };
                let curve = out
                    .windows
                    .iter()
                    .map(|w| LockCurveRow {
                        initial_code: code,
                        window: w.index,
                        net: w.net,
                        pi_code: w.pi_code,
                        unwrapped: w.unwrapped,
                    })
                    .collect::<Vec<_>>();
                Ok((summary, curve))
            })
            .collect()
    });
    let (summaries, curves): (Vec<_>, Vec<_>) = results?.into_iter().unzip();
    Ok((summaries, curves.into_iter().flatten().collect()))
}
