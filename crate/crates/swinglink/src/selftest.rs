// SPDX-License-Identifier: Apache-2.0

//! A quick built-in check of the codec, the start-flit detector and the
//! energy model against known values.

use swinglink_core::codec::{decode, encode, CONTROL_CODES};
use swinglink_core::energy::{energy_per_bit, DutyCycleParams, PowerProfile, SERDES_REFERENCE};
use swinglink_core::rx::{RxDatapath, SamplePair};
use swinglink_core::tx::{build_start_flit, build_training_word};
use swinglink_core::word::encode_data_word;
use swinglink_core::{ByteSymbol, Disparity};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn codec_check() -> Check {
    let mut bad = 0;
    let mut cases = 0;
    for rd in [Disparity::Negative, Disparity::Positive] {
        let symbols =
            (0..=255u8).map(ByteSymbol::data).chain(CONTROL_CODES.iter().filter_map(|&v| ByteSymbol::control(v).ok()));
        for s in symbols {
            cases += 1;
            let ok = encode(s, rd).is_ok_and(|(cg, next)| decode(cg, rd) == Ok((s, next)));
            bad += usize::from(!ok);
        }
    }
    Check { name: "codec_round_trip", passed: bad == 0 && cases == 536, detail: format!("{cases} cases, {bad} failures") }
}

fn detector_check() -> Check {
    let mut found = 0;
    for rd in [Disparity::Negative, Disparity::Positive] {
        for delay in [0usize, 1] {
            let mut bits = vec![false; delay];
            let mut r = rd;
            for _ in 0..3 {
                let (w, n) = build_training_word(r);
                bits.extend(w.serial_bits());
                r = n;
            }
            let (start, r) = build_start_flit(r);
            bits.extend(start.serial_bits());
            bits.extend(encode_data_word([0xDE, 0xAD, 0xBE, 0xEF], r).0.serial_bits());
            let mut dp = RxDatapath::new();
            dp.control(true, true);
            let hits: Vec<_> = bits
                .chunks_exact(2)
                .filter_map(|c| dp.step(SamplePair::new(c[0], c[1]), true, true).start)
                .collect();
            if hits.len() == 1 && hits[0].shift == (delay == 1) && hits[0].disparity == rd {
                found += 1;
            }
        }
    }
    Check { name: "start_flit_alignment", passed: found == 4, detail: format!("{found}/4 cases") }
}

fn energy_check(p: &PowerProfile) -> Check {
    let d = DutyCycleParams::default();
    let mut worst: f64 = 0.0;
    for (mbps, want) in SERDES_REFERENCE {
        let got = energy_per_bit(mbps * 1e6, p, &d).map(|e| e * 1e12).unwrap_or(f64::NAN);
        let rel = ((got - want) / want).abs();
        worst = if rel.is_nan() { f64::INFINITY } else { worst.max(rel) };
    }
    Check { name: "energy_golden_points", passed: worst <= 1e-4, detail: format!("worst relative error {worst:.2e}") }
}

pub fn run(profile: &PowerProfile) -> Vec<Check> {
    vec![codec_check(), detector_check(), energy_check(profile)]
}
