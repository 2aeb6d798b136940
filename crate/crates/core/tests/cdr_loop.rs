// SPDX-License-Identifier: Apache-2.0

use swinglink_core::cdr::{cdr_lock, Cdr, LoopFilterState, PhaseSampler, PhaseState};
use swinglink_core::channel::{ChannelConfig, WaveformSampler};
use swinglink_core::time::{ClockSpec, UiFraction};
use swinglink_core::tx::{build_training_word, serialize};
use swinglink_core::Disparity;

fn training(bits: usize) -> swinglink_core::waveform::Waveform {
    let (w, _) = build_training_word(Disparity::Negative);
    let words = vec![w; bits.div_ceil(40)];
    serialize(&words, 0, ClockSpec::nominal())
}

fn sampler(bits: usize, cfg: ChannelConfig) -> WaveformSampler {
    WaveformSampler::new(training(bits), cfg, ClockSpec::nominal()).unwrap()
}

fn codes(err_fs: i64) -> f64 {
    err_fs as f64 / ClockSpec::nominal().pi_step() as f64
}

#[test]
fn all_phases_lock_within_budget() {
    let mut worst = 0;
    for code in 0..32 {
        let mut s = sampler(4096, ChannelConfig::ideal());
        let out = cdr_lock(&mut s, PhaseState::new(code), LoopFilterState::new(4).unwrap(), 1024);
        assert!(out.locked, "code {code}");
        worst = worst.max(out.settle_cycles.unwrap());
    }
    assert!(worst < 1024);
}

fn run_after_lock(cfg: ChannelConfig, divider: u32, start: i64, ui: usize) -> (WaveformSampler, Cdr, Vec<i64>, f64) {
    let mut s = sampler(ui + 8192, cfg);
    let out = cdr_lock(&mut s, PhaseState::new(start), LoopFilterState::new(divider).unwrap(), 1024);
    assert!(out.locked);
    let mut cdr = Cdr::new(out.phase, out.filter);
    let mut trail = Vec::new();
    let mut worst_err: f64 = 0.0;
    for _ in 0..ui / 2 {
        worst_err = worst_err.max(codes(s.phase_error_fs(&cdr.phase()).unwrap()).abs());
        if let Some(rec) = cdr.run_cycle(&mut s) {
            trail.push(rec.unwrapped);
        }
    }
    (s, cdr, trail, worst_err)
}

#[test]
fn locked_loop_dithers_at_most_two_codes() {
    for start in [0, 7, 16, 23] {
        let (_, _, trail, worst) = run_after_lock(ChannelConfig::ideal(), 4, start, 100_000);
        let p2p = trail.iter().max().unwrap() - trail.iter().min().unwrap();
        assert!(p2p <= 2, "start {start}: {p2p} codes p-p");
        assert!(worst <= 2.0);
    }
}

#[test]
fn tracks_200_ppm_without_slips() {
    for ppm in [200.0, -200.0] {
        let cfg = ChannelConfig { freq_offset_ppb: ChannelConfig::ppm(ppm), ..ChannelConfig::ideal() };
        let (_, _, trail, worst) = run_after_lock(cfg, 4, 0, 1_000_000);
        // A slip would carry the sampling instant past a UI boundary.
        assert!(worst < 4.0, "{ppm} ppm: worst error {worst} codes");
        // One PI code per 156.25 RX cycles, against the drift direction.
        let cycles = 500_000.0;
        let moved = (trail.last().unwrap() - trail[0]) as f64;
        let expect = -ppm.signum() * cycles / 156.25;
        assert!((moved - expect).abs() <= 4.0, "{ppm} ppm moved {moved}, expected {expect}");
        // Monotone up to the bang-bang dither.
        let mut extreme = trail[0];
        for &u in &trail {
            extreme = if ppm > 0.0 { extreme.min(u) } else { extreme.max(u) };
            assert!((u - extreme).abs() <= 2);
        }
    }
}

#[test]
fn slow_divider_is_slew_limited() {
    // Worst start: the data clock exactly on a transition, 8 codes away.
    let lf = LoopFilterState::new(128).unwrap();
    let mut s = sampler(4096, ChannelConfig::ideal());
    assert!(!cdr_lock(&mut s, PhaseState::new(0), lf, 256).locked);
    for code in 0..32 {
        let mut s = sampler(4096, ChannelConfig::ideal());
        assert!(cdr_lock(&mut s, PhaseState::new(code), lf, 1024).locked, "code {code}");
    }
}

#[test]
fn perturbation_is_pulled_back() {
    let (mut s, cdr, _, _) = run_after_lock(ChannelConfig::ideal(), 4, 3, 2000);
    let mut cdr = Cdr::new(swinglink_core::cdr::pi_rotate(cdr.phase(), 4), cdr.filter());
    let mut back = None;
    for w in 0..64 {
        for _ in 0..4 {
            cdr.run_cycle(&mut s);
        }
        if codes(s.phase_error_fs(&cdr.phase()).unwrap()).abs() <= 2.0 {
            back = Some(w);
            break;
        }
    }
    assert!(back.is_some());
}

/// Runs `cycles` from `start` without the lock gate and returns the
/// unwrapped trail and worst phase error over the second half.
fn free_run(cfg: ChannelConfig, divider: u32, cycles: usize) -> (Vec<i64>, f64) {
    let mut s = sampler(2 * cycles + 64, cfg);
    let mut cdr = Cdr::new(PhaseState::new(0), LoopFilterState::new(divider).unwrap());
    let (mut trail, mut worst) = (Vec::new(), 0f64);
    for c in 0..cycles {
        let err = codes(s.phase_error_fs(&cdr.phase()).unwrap()).abs();
        let rec = cdr.run_cycle(&mut s);
        if c >= cycles / 2 {
            worst = worst.max(err);
            trail.extend(rec.map(|r| r.unwrapped));
        }
    }
    (trail, worst)
}

#[test]
fn convergence_from_sub_ui_offsets() {
    for divider in [4, 8] {
        for k in 0..16 {
            let cfg = ChannelConfig { phase_offset: UiFraction(k << 12), ..ChannelConfig::ideal() };
            let (_, _, trail, worst) = run_after_lock(cfg, divider, 0, 20_000);
            let p2p = trail.iter().max().unwrap() - trail.iter().min().unwrap();
            assert!(worst <= 2.0 && p2p <= 2, "N={divider} k={k}: err {worst}, p2p {p2p}");
        }
    }
}

// With every detector voting on a clean training stream the net is +-7, so
// one window moves 7/N codes and the limit cycle cannot be tighter than that.
#[test]
fn fast_dividers_limit_cycle_at_the_step_size() {
    for (divider, bound) in [(1, 7), (2, 4)] {
        for k in 0..16 {
            let cfg = ChannelConfig { phase_offset: UiFraction(k << 12), ..ChannelConfig::ideal() };
            let (trail, worst) = free_run(cfg, divider, 4000);
            let p2p = trail.iter().max().unwrap() - trail.iter().min().unwrap();
            assert!(p2p <= bound && p2p > 2, "N={divider} k={k}: p2p {p2p}");
            assert!(worst < 8.0, "N={divider} k={k}: err {worst}");
        }
    }
}

#[test]
fn divider_one_tracks_500_ppm() {
    for ppm in [500.0, -500.0] {
        let cfg = ChannelConfig { freq_offset_ppb: ChannelConfig::ppm(ppm), ..ChannelConfig::ideal() };
        let (trail, worst) = free_run(cfg, 1, 1_000_000);
        // Half a UI is 8 codes; staying inside means no slip.
        assert!(worst < 8.0, "{ppm} ppm: {worst}");
        let moved = (trail.last().unwrap() - trail[0]) as f64;
        let expect = -ppm.signum() * 500_000.0 * 32.0 * 500e-6;
        assert!((moved - expect).abs() <= 8.0, "{ppm} ppm moved {moved}, expected {expect}");
    }
}

#[test]
fn trajectories_are_deterministic() {
    let cfg = ChannelConfig { jitter_sigma: UiFraction::from_ui(0.05), seed: 9, ..ChannelConfig::default() };
    let run = || {
        let mut s = sampler(8192, cfg);
        cdr_lock(&mut s, PhaseState::new(5), LoopFilterState::default(), 2048).windows
    };
    assert_eq!(run(), run());
}
