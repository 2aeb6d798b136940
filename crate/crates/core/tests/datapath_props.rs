// SPDX-License-Identifier: Apache-2.0

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use swinglink_core::cdr::PhaseState;
use swinglink_core::channel::{ChannelConfig, RxFrontEnd};
use swinglink_core::codec::encode;
use swinglink_core::detector::{FlitPattern, SequenceDetector};
use swinglink_core::rx::{decode_word, deserialize_step, RxDatapath, RxMode, RxState, SamplePair};
use swinglink_core::time::ClockSpec;
use swinglink_core::tx::{
    build_start_flit, build_stop_flit, build_training_word, serialize, tx_step, TxConfig, TxMode, TxState,
};
use swinglink_core::word::encode_data_word;
use swinglink_core::{ByteSymbol, Disparity, Word40, WordKind};

fn bits_of(words: &[Word40]) -> Vec<bool> {
    words.iter().flat_map(|w| w.serial_bits().collect::<Vec<_>>()).collect()
}

fn pairs(bits: &[bool]) -> Vec<SamplePair> {
    bits.chunks_exact(2).map(|c| SamplePair::new(c[0], c[1])).collect()
}

fn data_words(payload: &[[u8; 4]], mut rd: Disparity) -> (Vec<Word40>, Disparity) {
    let mut out = Vec::new();
    for &p in payload {
        let (w, r) = encode_data_word(p, rd);
        out.push(w);
        rd = r;
    }
    (out, rd)
}

/// Checks the emitted kinds against (Training* Start Data* Stop)* Training*,
/// allowing a stream that ends mid-frame.
fn grammar_ok(kinds: &[WordKind]) -> bool {
    let mut in_frame = false;
    let mut prev = None;
    for &k in kinds {
        let ok = match k {
            WordKind::Training => !in_frame,
            WordKind::StartFlit => !in_frame && prev == Some(WordKind::Training),
            WordKind::DataBody => in_frame,
            WordKind::StopFlit => in_frame,
        };
        if !ok {
            return false;
        }
        in_frame = matches!(k, WordKind::StartFlit | WordKind::DataBody);
        prev = Some(k);
    }
    true
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn tx_output_follows_the_frame_grammar(
        inputs in prop::collection::vec((any::<bool>(), any::<bool>(), any::<Option<[u8; 4]>>()), 1..300),
    ) {
        let mut st = TxState::default();
        let mut kinds = Vec::new();
        let mut pops = 0;
        let mut data = 0;
        for (warm, comm, head) in inputs {
            let cfg = TxConfig { warm_en: warm, comm_en: comm, ..TxConfig::default() };
            let (next, out) = tx_step(st, &cfg, head);
            // One word per slot whenever the controller is active.
            prop_assert_eq!(out.word.is_some(), next.mode != TxMode::Idle);
            if let Some(w) = out.word {
                kinds.push(w.kind());
                if w.kind() == WordKind::DataBody {
                    data += 1;
                    prop_assert_eq!(Some(w), head.map(|h| encode_data_word(h, st.rd).0));
                }
            }
            if out.fifo_pop {
                pops += 1;
                prop_assert!(comm && head.is_some());
                prop_assert_eq!(next.mode, TxMode::DataComm);
            }
            st = next;
        }
        prop_assert!(grammar_ok(&kinds), "{:?}", kinds);
        prop_assert_eq!(pops, data);
    }

    #[test]
    fn serialize_preserves_length_and_order(payload in prop::collection::vec(any::<[u8; 4]>(), 1..40)) {
        let clock = ClockSpec::nominal();
        let (words, _) = data_words(&payload, Disparity::Negative);
        let wave = serialize(&words, 1234, clock);
        prop_assert_eq!(wave.end() - wave.start(), 40 * words.len() as i64 * clock.ui());
        let t: Vec<i64> = wave.transitions().collect();
        prop_assert!(t.windows(2).all(|w| w[0] < w[1]));
        let bits = bits_of(&words);
        for (i, &b) in bits.iter().enumerate() {
            let centre = 1234 + i as i64 * clock.ui() + clock.ui() / 2;
            prop_assert_eq!(wave.level_at(centre).unwrap().bit(), b);
        }
    }

    #[test]
    fn deserialize_inverts_serialize(payload in prop::collection::vec(any::<[u8; 4]>(), 1..40)) {
        let clock = ClockSpec::nominal();
        let (words, _) = data_words(&payload, Disparity::Positive);
        let mut wave = serialize(&words, 0, clock);
        wave.hold_until(wave.end() + clock.period());
        // PI code 8 puts the even sample on the centre of the first UI.
        let mut fe = RxFrontEnd::new(ChannelConfig::ideal(), clock, 0).unwrap();
        let phase = PhaseState::new(8);
        let mut rx = RxState::with_mode(RxMode::DataComm);
        let mut out = Vec::new();
        for _ in 0..words.len() * 20 {
            let s = fe.sample_cycle_on(&wave, &phase).unwrap();
            let (next, w) = deserialize_step(rx, s.data);
            rx = next;
            out.extend(w);
        }
        let got: Vec<u64> = out.iter().map(Word40::bits).collect();
        let want: Vec<u64> = words.iter().map(Word40::bits).collect();
        prop_assert_eq!(got, want);
        let mut rd = Disparity::Positive;
        for (w, p) in out.iter().zip(&payload) {
            let (d, next) = decode_word(w, rd);
            rd = next;
            prop_assert_eq!(d.bytes, *p);
            prop_assert!(!d.corrupt());
        }
    }
}

#[test]
fn start_flit_found_at_both_shifts_and_disparities() {
    let payload = [[0x12, 0x34, 0x56, 0x78], [0xFF, 0x00, 0xA5, 0x5A], [0xFB, 0xFD, 0xBC, 0x4A]];
    for rd in [Disparity::Negative, Disparity::Positive] {
        for delay in [0usize, 1] {
            let mut words = Vec::new();
            let mut r = rd;
            for _ in 0..4 {
                let (w, n) = build_training_word(r);
                words.push(w);
                r = n;
            }
            let (start, r) = build_start_flit(r);
            words.push(start);
            let (data, r) = data_words(&payload, r);
            words.extend(data);
            words.push(build_stop_flit(r).0);
            words.push(build_training_word(r).0);

            let mut bits = vec![false; delay];
            bits.extend(bits_of(&words));
            let mut dp = RxDatapath::new();
            dp.control(true, false);
            dp.control(true, true);
            let mut starts = Vec::new();
            let mut got = Vec::new();
            let mut dec_rd = rd;
            let mut stops = 0;
            for p in pairs(&bits) {
                let out = dp.step(p, true, true);
                starts.extend(out.start);
                if let Some(w) = out.word {
                    let (d, n) = decode_word(&w, dec_rd);
                    dec_rd = n;
                    got.push(d.bytes);
                }
                stops += usize::from(out.stop);
            }
            assert_eq!(starts.len(), 1, "rd {rd} delay {delay}");
            assert_eq!(starts[0].shift, delay == 1);
            assert_eq!(starts[0].disparity, rd);
            assert_eq!(got, payload);
            assert_eq!(stops, 1);
        }
    }
}

#[test]
fn no_false_start_over_a_million_random_bits() {
    let mut rng = rand::rngs::StdRng::seed_from_u64(7);
    let payload: Vec<[u8; 4]> = (0..25_000).map(|_| rng.random()).collect();
    let (words, _) = data_words(&payload, Disparity::Negative);
    let bits = bits_of(&words);
    assert!(bits.len() >= 1_000_000);
    for delay in [0usize, 1] {
        let mut det = SequenceDetector::new(FlitPattern::start());
        let mut stop = SequenceDetector::new(FlitPattern::stop());
        let mut hits = 0;
        for p in pairs(&bits[delay..]) {
            hits += usize::from(det.step(p).is_some());
            hits += usize::from(stop.step(p).is_some());
        }
        assert_eq!(hits, 0, "delay {delay}");
    }
}

/// Every flit code group does turn up inside two concatenated data groups,
/// at every one of the nine misaligned offsets, but never word-aligned.
#[test]
fn flit_groups_inside_data_only_when_misaligned() {
    let mut flit = Vec::new();
    for s in [ByteSymbol::K27_7, ByteSymbol::K29_7] {
        for rd in [Disparity::Negative, Disparity::Positive] {
            flit.push(encode(s, rd).unwrap().0.bits());
        }
    }
    let mut aligned = 0;
    let mut seen = std::collections::BTreeSet::new();
    for rd in [Disparity::Negative, Disparity::Positive] {
        for a in 0..=255u8 {
            let (g1, r) = encode(ByteSymbol::data(a), rd).unwrap();
            aligned += usize::from(flit.contains(&g1.bits()));
            for b in 0..=255u8 {
                let (g2, _) = encode(ByteSymbol::data(b), r).unwrap();
                let joined = (u32::from(g1.bits()) << 10) | u32::from(g2.bits());
                for off in 1..10 {
                    let window = ((joined >> (10 - off)) & 0x3FF) as u16;
                    if flit.contains(&window) {
                        seen.insert((window, off));
                    }
                }
            }
        }
    }
    assert_eq!(aligned, 0);
    assert_eq!(seen.len(), 4 * 9);
}
