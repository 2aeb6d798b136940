// SPDX-License-Identifier: Apache-2.0

use swinglink_core::channel::ChannelConfig;
use swinglink_core::energy::{bw_max, energy_per_bit, DutyCycleParams, PowerProfile};
use swinglink_core::link::{
    bit_errors, check_protocol, measure_ber, random_payload, run_handshake, run_transfer, GpioLine,
    HandshakeStep, LinkConfig, WarmMode,
};
use swinglink_core::time::{UiFraction, FS_PER_NS, FS_PER_S, FS_PER_US};
use swinglink_core::trace::{NullSink, TraceRecord};

fn noisy() -> ChannelConfig {
    ChannelConfig {
        phase_offset: UiFraction::from_ui(0.37),
        jitter_sigma: UiFraction::from_ui(0.02),
        ..ChannelConfig::default()
    }
}

fn count(trace: &[TraceRecord], event: &str) -> usize {
    trace.iter().filter(|r| r.event == event).count()
}

#[test]
fn sixteen_kib_is_one_duty_cycle() {
    let payload = random_payload(16 * 1024, 3);
    let cfg = LinkConfig { channel: ChannelConfig::ideal(), ..LinkConfig::default() };
    let mut trace = Vec::new();
    let r = run_transfer(&payload, &cfg, 3, &mut trace).unwrap();
    assert_eq!(r.bit_errors, 0);
    assert_eq!((r.duty_cycles, r.cycles_completed), (1, 1));
    // 4096 data words and two flits, 50 ns each.
    assert_eq!(r.durations.data_comm, (4096 + 2) * 50 * FS_PER_NS);
    assert_eq!(count(&trace, "start_flit"), 1);
    assert_eq!(count(&trace, "stop_flit"), 1);
    assert_eq!(r.durations.total(), r.total_time);
}

#[test]
fn thirty_two_kib_takes_two_cycles() {
    let payload = random_payload(32 * 1024, 4);
    let cfg = LinkConfig { channel: noisy(), ..LinkConfig::default() };
    let mut trace = Vec::new();
    let r = run_transfer(&payload, &cfg, 4, &mut trace).unwrap();
    assert_eq!(r.bit_errors, 0);
    assert_eq!(r.cycles_completed, 2);
    assert_eq!(count(&trace, "start_flit"), 2);
    assert_eq!(count(&trace, "stop_flit"), 2);
    assert_eq!(count(&trace, "detect_start"), 2);
    assert_eq!(count(&trace, "detect_stop"), 2);
    assert!(r.protocol_ok());
}

#[test]
fn duty_cycle_count_is_ceiling() {
    for (bytes, buffer) in [(100usize, 64usize), (128, 64), (4, 1024), (1000, 256)] {
        let mut cfg = LinkConfig { channel: noisy(), ..LinkConfig::default() };
        cfg.rx.rx_buffer_bytes = buffer;
        let payload = random_payload(bytes, bytes as u64);
        let r = run_transfer(&payload, &cfg, 11, &mut NullSink).unwrap();
        assert_eq!(r.duty_cycles as usize, bytes.div_ceil(buffer), "{bytes}/{buffer}");
        assert_eq!(r.cycles_completed, r.duty_cycles);
        assert_eq!(r.payload_out, payload);
    }
}

#[test]
fn odd_lengths_are_padded() {
    let payload = [1u8, 2, 3, 4, 5, 6, 7];
    let r = run_transfer(&payload, &LinkConfig::default(), 2, &mut NullSink).unwrap();
    assert_eq!(r.padding_bytes, 1);
    assert_eq!(r.payload_out, payload);
    assert_eq!(r.bytes_popped, 8);
}

#[test]
fn conservation_of_words() {
    // Heavy jitter so that some words arrive corrupt.
    let cfg = LinkConfig {
        channel: ChannelConfig { jitter_sigma: UiFraction::from_ui(0.2), ..ChannelConfig::default() },
        ..LinkConfig::default()
    };
    let payload = random_payload(8192, 5);
    let r = run_transfer(&payload, &cfg, 5, &mut NullSink).unwrap();
    assert!(r.corrupt_words > 0);
    assert_eq!(r.bytes_popped, 4 * r.data_words_sent);
    if r.missing_stops == 0 && r.lock_failures == 0 && r.words_lost == 0 {
        assert_eq!(r.bytes_popped, r.bytes_landed + 4 * r.corrupt_words);
    }
}

#[test]
fn handshake_order_and_timing() {
    let cfg = LinkConfig { channel: ChannelConfig::ideal(), ..LinkConfig::default() };
    let mut trace = Vec::new();
    let (events, gpio) = run_handshake(&cfg, true, &mut trace).unwrap();
    let steps: Vec<_> = events.iter().map(|e| e.step).collect();
    assert_eq!(steps, &HandshakeStep::ORDER[..5]);
    check_protocol(&events).unwrap();
    // 1024 cycles of 2.5 ns after the request, to within the RX cycle grid.
    let req = events[0].time;
    let ready = events[2].time;
    assert!((ready - req - 2560 * FS_PER_NS).abs() < 2_500_000, "{}", ready - req);
    assert_eq!(gpio.edges(GpioLine::ClockReady).len(), 1);

    let (events, gpio) = run_handshake(&cfg, false, &mut NullSink).unwrap();
    assert!(events.is_empty());
    assert!(gpio.is_quiet());
}

#[test]
fn every_transfer_obeys_the_protocol() {
    for delay in [0, 7 * FS_PER_NS, 120 * FS_PER_NS] {
        let mut cfg = LinkConfig { channel: noisy(), gpio_delay: delay, ..LinkConfig::default() };
        cfg.rx.rx_buffer_bytes = 256;
        let r = run_transfer(&random_payload(1000, 1), &cfg, 1, &mut NullSink).unwrap();
        check_protocol(&r.handshake).unwrap();
        assert!(r.protocol_ok() && r.bit_errors == 0, "delay {delay}");
        let starts = r.handshake.iter().filter(|e| e.step == HandshakeStep::StartFlit).count();
        assert_eq!(starts, 4);
    }
}

#[test]
fn lock_criterion_mode() {
    let cfg = LinkConfig {
        channel: noisy(),
        warm_mode: WarmMode::LockCriterion { budget_cycles: 1024 },
        ..LinkConfig::default()
    };
    let r = run_transfer(&random_payload(64, 9), &cfg, 9, &mut NullSink).unwrap();
    assert_eq!(r.bit_errors, 0);
    // Locks well before the fixed wait would have ended.
    assert!(r.durations.warm_up < 2 * FS_PER_US);

    let starved = LinkConfig { warm_mode: WarmMode::LockCriterion { budget_cycles: 8 }, ..cfg };
    let r = run_transfer(&random_payload(64, 9), &starved, 9, &mut NullSink).unwrap();
    assert_eq!(r.lock_failures, 1);
    assert_eq!(r.exit_code(), 2);
    assert_eq!(r.cycles_completed, 0);
    assert_eq!(r.bit_errors, 64 * 8);
}

#[test]
fn noisy_channel_is_error_free_and_deterministic() {
    let payload = random_payload(16 * 1024, 77);
    let cfg = LinkConfig { channel: noisy(), ..LinkConfig::default() };
    let run = || {
        let mut trace = Vec::new();
        let r = run_transfer(&payload, &cfg, 77, &mut trace).unwrap();
        (r, trace)
    };
    let (a, ta) = run();
    let (b, tb) = run();
    assert_eq!(a.bit_errors, 0);
    assert_eq!(a, b);
    assert_eq!(ta, tb);
}

#[test]
fn ber_examples() {
    let clean = ChannelConfig::ideal();
    let r = measure_ber(1_000_000, &clean, 1).unwrap();
    assert_eq!(r.errors, 0);
    assert!(r.ci_high < 4e-6);

    let jittery = ChannelConfig { jitter_sigma: UiFraction::from_ui(0.2), ..ChannelConfig::default() };
    let r = measure_ber(1_000_000, &jittery, 1).unwrap();
    // Sampling mid-UI, a bit flips when jitter exceeds half a UI: 2*Q(2.5)
    // ~ 1.2e-2 per sample, before decode error spreading.
    assert!(r.ber > 1e-3, "ber {}", r.ber);
    assert!(r.ci_low <= r.ber && r.ber <= r.ci_high);

    let again = measure_ber(1_000_000, &jittery, 1).unwrap();
    assert_eq!(r, again);
}

#[test]
fn same_seed_same_error_positions() {
    let cfg = LinkConfig {
        channel: ChannelConfig { jitter_sigma: UiFraction::from_ui(0.15), ..ChannelConfig::default() },
        ..LinkConfig::default()
    };
    let payload = random_payload(4096, 8);
    let a = run_transfer(&payload, &cfg, 8, &mut NullSink).unwrap();
    let b = run_transfer(&payload, &cfg, 8, &mut NullSink).unwrap();
    assert!(a.bit_errors > 0);
    assert_eq!(a.payload_out, b.payload_out);
    assert_eq!(bit_errors(&payload, &a.payload_out), a.bit_errors);
}

#[test]
fn simulated_energy_matches_the_model_at_full_rate() {
    let p = PowerProfile::default();
    let d = DutyCycleParams::default();
    let payload = random_payload(16 * 1024, 6);
    let r = run_transfer(&payload, &LinkConfig::default(), 6, &mut NullSink).unwrap();
    let model = energy_per_bit(bw_max(&p, &d), &p, &d).unwrap() * 131_072.0;
    let rel = (r.energy_j - model).abs() / model;
    assert!(rel < 5e-3, "sim {} J, model {} J", r.energy_j, model);
}

#[test]
fn idle_periods_cost_idle_power() {
    let p = PowerProfile::default();
    let mut cfg = LinkConfig { cycle_period: Some(FS_PER_S / 100), ..LinkConfig::default() };
    cfg.rx.rx_buffer_bytes = 1024;
    let payload = random_payload(3000, 2);
    let r = run_transfer(&payload, &cfg, 2, &mut NullSink).unwrap();
    assert_eq!(r.bit_errors, 0);
    assert_eq!(r.total_time, 3 * FS_PER_S / 100);
    let idle_s = r.durations.idle as f64 / FS_PER_S as f64;
    assert!(idle_s > 0.0299 && idle_s < 0.03);
    assert!(r.energy_j > p.p_idle() * idle_s);
}
