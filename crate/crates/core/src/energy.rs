// SPDX-License-Identifier: Apache-2.0

//! Power states, the duty-cycled energy model and the peripheral comparison.
//!
//! A duty cycle is warm-up (`T_Warm`), a burst that fills the RX buffer
//! (`T_Act`) and idle for the rest of `T_Cycle = buffer_bits / bandwidth`.

use alloc::vec::Vec;

use crate::time::{Femtos, FS_PER_S};

/// Published state totals, rounded as printed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateTotals {
    pub act_w: f64,
    pub warm_w: f64,
    pub idle_w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerProfile {
    pub rx_analog_w: f64,
    pub tx_analog_w: f64,
    pub rx_digital_datacomm_w: f64,
    pub rx_digital_warm_w: f64,
    pub rx_digital_idle_w: f64,
    pub tx_digital_active_w: f64,
    pub tx_digital_idle_w: f64,
    /// When set, state powers come from these totals instead of the
    /// component sums.
    pub reported: Option<StateTotals>,
    /// Analog blocks are cut by an external switch while idle.
    pub analog_switch: bool,
}

impl PowerProfile {
    pub const REPORTED_TOTALS: StateTotals =
        StateTotals { act_w: 4.27e-3, warm_w: 4.05e-3, idle_w: 33.1e-6 };

    /// Component values with the totals derived by summation.
    pub const fn from_components() -> Self {
        PowerProfile {
            rx_analog_w: 2.85e-3,
            tx_analog_w: 0.59e-3,
            rx_digital_datacomm_w: 0.591e-3,
            rx_digital_warm_w: 0.367e-3,
            rx_digital_idle_w: 0.433e-6,
            tx_digital_active_w: 0.239e-3,
            tx_digital_idle_w: 32.7e-6,
            reported: None,
            analog_switch: true,
        }
    }

    /// Component values plus the published, rounded state totals. The
    /// duty-cycle curve was computed from the rounded totals.
    pub const fn reported() -> Self {
        let mut p = Self::from_components();
        p.reported = Some(Self::REPORTED_TOTALS);
        p
    }

    pub fn with_analog_switch(self, on: bool) -> Self {
        PowerProfile { analog_switch: on, ..self }
    }

    pub fn analog_w(&self) -> f64 {
        self.rx_analog_w + self.tx_analog_w
    }

    pub fn component_totals(&self) -> StateTotals {
        StateTotals {
            act_w: self.analog_w() + self.rx_digital_datacomm_w + self.tx_digital_active_w,
            warm_w: self.analog_w() + self.rx_digital_warm_w + self.tx_digital_active_w,
            idle_w: self.rx_digital_idle_w + self.tx_digital_idle_w,
        }
    }

    fn totals(&self) -> StateTotals {
        self.reported.unwrap_or_else(|| self.component_totals())
    }

    pub fn p_act(&self) -> f64 {
        self.totals().act_w
    }

    pub fn p_warm(&self) -> f64 {
        self.totals().warm_w
    }

    pub fn p_idle(&self) -> f64 {
        let idle = self.totals().idle_w;
        if self.analog_switch {
            idle
        } else {
            idle + self.analog_w()
        }
    }
}

impl Default for PowerProfile {
    fn default() -> Self {
        Self::reported()
    }
}

/// What "bits" means in `T_Act` and in bandwidth figures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Accounting {
    /// Buffer bits clocked at the line rate, ignoring the 8b/10b overhead.
    #[default]
    Line,
    /// Payload bits; the burst lasts 10/8 as long.
    Goodput,
}

impl Accounting {
    pub fn as_str(self) -> &'static str {
        match self {
            Accounting::Line => "line",
            Accounting::Goodput => "goodput",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DutyCycleParams {
    pub buffer_bits: u64,
    pub line_rate_bps: f64,
    pub t_warm_s: f64,
    pub accounting: Accounting,
}

impl Default for DutyCycleParams {
    fn default() -> Self {
        DutyCycleParams {
            buffer_bits: 16 * 1024 * 8,
            line_rate_bps: 0.8e9,
            t_warm_s: 2.56e-6,
            accounting: Accounting::Line,
        }
    }
}

impl DutyCycleParams {
    pub fn t_act_s(&self) -> f64 {
        let line = self.buffer_bits as f64 / self.line_rate_bps;
        match self.accounting {
            Accounting::Line => line,
            Accounting::Goodput => line * 10.0 / 8.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum EnergyError {
    #[error("bandwidth must be positive, got {0} bit/s")]
    NonPositiveBandwidth(f64),
    #[error("{bw_bps} bit/s exceeds the duty-cycle maximum of {bw_max_bps} bit/s")]
    Infeasible { bw_bps: f64, bw_max_bps: f64 },
}

pub fn bw_max(_p: &PowerProfile, d: &DutyCycleParams) -> f64 {
    d.buffer_bits as f64 / (d.t_act_s() + d.t_warm_s)
}

pub fn continuous_efficiency(p: &PowerProfile, line_rate_bps: f64) -> f64 {
    p.p_act() / line_rate_bps
}

/// Per-cycle durations at bandwidth `bw_bps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleTimes {
    pub t_cycle_s: f64,
    pub t_act_s: f64,
    pub t_warm_s: f64,
    pub t_idle_s: f64,
}

pub fn cycle_times(bw_bps: f64, p: &PowerProfile, d: &DutyCycleParams) -> Result<CycleTimes, EnergyError> {
    if bw_bps.is_nan() || bw_bps <= 0.0 {
        return Err(EnergyError::NonPositiveBandwidth(bw_bps));
    }
    let max = bw_max(p, d);
    if bw_bps > max {
        return Err(EnergyError::Infeasible { bw_bps, bw_max_bps: max });
    }
    let t_cycle_s = d.buffer_bits as f64 / bw_bps;
    let t_act_s = d.t_act_s();
    let t_idle_s = if bw_bps == max { 0.0 } else { (t_cycle_s - t_act_s - d.t_warm_s).max(0.0) };
    Ok(CycleTimes { t_cycle_s, t_act_s, t_warm_s: d.t_warm_s, t_idle_s })
}

/// Energy per buffer bit, in joules.
pub fn energy_per_bit(bw_bps: f64, p: &PowerProfile, d: &DutyCycleParams) -> Result<f64, EnergyError> {
    let t = cycle_times(bw_bps, p, d)?;
    let e = p.p_act() * t.t_act_s + p.p_warm() * t.t_warm_s + p.p_idle() * t.t_idle_s;
    Ok(e / d.buffer_bits as f64)
}

/// The bandwidth-independent part of [`energy_per_bit`]: `E(bw) = C1 + P_idle/bw`.
pub fn c1(p: &PowerProfile, d: &DutyCycleParams) -> f64 {
    let (ta, tw) = (d.t_act_s(), d.t_warm_s);
    (p.p_act() * ta + p.p_warm() * tw - p.p_idle() * (ta + tw)) / d.buffer_bits as f64
}

/// Time spent in each link mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ModeDurations {
    pub idle: Femtos,
    pub warm_up: Femtos,
    pub data_comm: Femtos,
}

impl ModeDurations {
    pub fn total(&self) -> Femtos {
        self.idle + self.warm_up + self.data_comm
    }
}

fn seconds(fs: Femtos) -> f64 {
    fs as f64 / FS_PER_S as f64
}

/// Energy of simulated mode durations. Under line accounting the data-comm
/// time is scaled by 8/10 so that each payload bit costs one line bit, which
/// is how the analytic model counts it.
pub fn energy_from_sim(durations: &ModeDurations, p: &PowerProfile, accounting: Accounting) -> f64 {
    let act = match accounting {
        Accounting::Line => seconds(durations.data_comm) * 8.0 / 10.0,
        Accounting::Goodput => seconds(durations.data_comm),
    };
    p.p_act() * act + p.p_warm() * seconds(durations.warm_up) + p.p_idle() * seconds(durations.idle)
}

/// A tabulated energy-per-bit curve of another peripheral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeripheralCurve {
    pub name: &'static str,
    /// `(bandwidth_mbps, pj_per_bit)`, bandwidth strictly increasing.
    pub points: &'static [(f64, f64)],
    pub pad_count: u32,
}

impl PeripheralCurve {
    pub fn domain_mbps(&self) -> (f64, f64) {
        (self.points[0].0, self.points[self.points.len() - 1].0)
    }

    /// Linear interpolation in log-bandwidth; `None` outside the tabulated
    /// range.
    pub fn interpolate(&self, bw_mbps: f64) -> Option<f64> {
        let (lo, hi) = self.domain_mbps();
        if !(bw_mbps >= lo && bw_mbps <= hi) {
            return None;
        }
        let i = self.points.partition_point(|&(x, _)| x < bw_mbps);
        let (x1, y1) = self.points[i];
        if x1 == bw_mbps || i == 0 {
            return Some(y1);
        }
        let (x0, y0) = self.points[i - 1];
        let f = (libm::log(bw_mbps) - libm::log(x0)) / (libm::log(x1) - libm::log(x0));
        Some(y0 + f * (y1 - y0))
    }
}

pub const SERDES_PADS: u32 = 4;

pub const SPI_SINGLE: PeripheralCurve = PeripheralCurve {
    name: "spi_single",
    pad_count: 4,
    points: &[
        (0.001000, 100.0),
        (0.050999, 67.9918465334806),
        (0.100998, 66.6300880126883),
        (0.150997, 65.8413979202736),
        (0.250995, 64.8581375818225),
        (0.350993, 64.2173591104389),
        (0.450991, 63.7424786216738),
        (0.600988, 63.2028684470398),
        (0.750985, 62.7872812858126),
        (0.900982, 62.4496587459783),
        (1.100978, 62.0800776162041),
        (1.300974, 61.7740263318322),
        (1.550969, 61.4533743678496),
        (1.800963, 61.1820558181741),
        (2.100958, 60.9035868652491),
        (2.400952, 60.6633742227293),
        (2.750945, 60.4194445639113),
        (3.150937, 60.1770726612017),
        (3.600928, 59.9396903091337),
        (4.100918, 59.709383096814),
        (4.650907, 59.4873013948615),
        (5.300894, 59.2573393350504),
        (6.00088, 59.0401217601795),
        (6.800864, 58.8217621292076),
        (7.700846, 58.6057076116804),
        (8.750825, 58.384331523279),
        (9.900802, 58.1712835504449),
        (11.250775, 57.9515425059938),
        (12.750745, 57.737193341301),
        (45.100098, 55.6174446052216),
        (50.0, 55.4478584932744),
    ],
};

pub const QUAD_SDR: PeripheralCurve = PeripheralCurve {
    name: "quad_sdr",
    pad_count: 6,
    points: &[
        (0.1, 75.193929),
        (0.3, 39.83659566),
        (0.7, 29.73450043),
        (3.0, 23.92579566),
        (7.0, 22.91558614),
        (10.0, 22.688289),
        (20.0, 22.423109),
        (30.0, 22.33471566),
        (40.0, 22.290519),
        (50.0, 22.264001),
        (100.0, 22.210965),
        (150.0, 22.19328633),
        (200.0, 22.184447),
    ],
};

pub const QUAD_DDR: PeripheralCurve = PeripheralCurve {
    name: "quad_ddr",
    pad_count: 6,
    points: &[
        (0.1, 69.65444675),
        (0.3, 34.29711341),
        (0.7, 24.19501818),
        (3.0, 18.38631341),
        (7.0, 17.37610389),
        (10.0, 17.14880675),
        (20.0, 16.88362675),
        (30.0, 16.79523341),
        (40.0, 16.75103675),
        (50.0, 16.72451875),
        (100.0, 16.67148275),
        (150.0, 16.65380408),
        (200.0, 16.64496475),
        (250.0, 16.63966115),
        (300.0, 16.63612541),
        (350.0, 16.63359989),
        (400.0, 16.63170575),
    ],
};

pub const OCTAL_SDR: PeripheralCurve = PeripheralCurve {
    name: "octal_sdr",
    pad_count: 11,
    points: &[
        (0.1, 96.17244675),
        (0.3, 43.13644675),
        (0.7, 27.98330389),
        (3.0, 19.27024675),
        (7.0, 17.75493246),
        (10.0, 17.41398675),
        (20.0, 17.01621675),
        (30.0, 16.88362675),
        (40.0, 16.81733175),
        (50.0, 16.77755475),
        (100.0, 16.69800075),
        (150.0, 16.67148275),
        (200.0, 16.65822375),
        (250.0, 16.65026835),
        (300.0, 16.64496475),
        (350.0, 16.64117646),
        (400.0, 16.63833525),
    ],
};

pub const OCTAL_DDR: PeripheralCurve = PeripheralCurve {
    name: "octal_ddr",
    pad_count: 11,
    points: &[
        (0.1, 93.40270562),
        (0.3, 40.36670562),
        (0.7, 25.21356277),
        (3.0, 16.50050562),
        (7.0, 14.98519134),
        (10.0, 14.64424562),
        (20.0, 14.24647562),
        (30.0, 14.11388562),
        (40.0, 14.04759062),
        (50.0, 14.00781362),
        (100.0, 13.92825962),
        (150.0, 13.90174162),
        (200.0, 13.88848262),
        (250.0, 13.88052722),
        (300.0, 13.87522362),
        (350.0, 13.87143534),
        (400.0, 13.86859412),
        (450.0, 13.86638429),
        (500.0, 13.86461642),
        (550.0, 13.86316999),
        (600.0, 13.86196462),
        (650.0, 13.8609447),
        (700.0, 13.86007048),
        (750.0, 13.85931282),
        (800.0, 13.85864987),
    ],
};

pub const HYPERBUS: PeripheralCurve = PeripheralCurve {
    name: "hyperbus",
    pad_count: 12,
    points: &[(0.1, 113.85), (1600.0, 113.85)],
};

/// All comparison curves in CSV column order.
pub const PERIPHERALS: [PeripheralCurve; 6] =
    [SPI_SINGLE, QUAD_SDR, QUAD_DDR, OCTAL_SDR, OCTAL_DDR, HYPERBUS];

/// The published SerDes duty-cycle curve, `(bandwidth_mbps, pj_per_bit)`.
pub const SERDES_REFERENCE: [(f64, f64); 27] = [
    (0.1, 336.3745801),
    (0.3, 115.7079134),
    (0.7, 52.66029436),
    (1.0, 38.47458008),
    (3.0, 16.40791341),
    (5.0, 11.99458008),
    (7.0, 10.10315151),
    (10.0, 8.684580078),
    (20.0, 7.029580078),
    (30.0, 6.477913411),
    (40.0, 6.202080078),
    (50.0, 6.036580078),
    (100.0, 5.705580078),
    (150.0, 5.595246745),
    (200.0, 5.540080078),
    (250.0, 5.506980078),
    (300.0, 5.484913411),
    (350.0, 5.469151507),
    (400.0, 5.457330078),
    (450.0, 5.448135634),
    (500.0, 5.440780078),
    (550.0, 5.434761896),
    (600.0, 5.429746745),
    (650.0, 5.425503155),
    (700.0, 5.421865792),
    (750.0, 5.418713411),
    (787.0, 5.416638528),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonRow {
    pub name: &'static str,
    /// `None` when the bandwidth is outside the curve's domain.
    pub pj_per_bit: Option<f64>,
    /// Peripheral energy divided by SerDes energy.
    pub ratio_vs_serdes: Option<f64>,
    pub pads: u32,
}

/// Evaluates every curve at `bw_bps` against the SerDes running at
/// `serdes_bw_bps`.
pub fn compare(
    bw_bps: f64,
    serdes_bw_bps: f64,
    curves: &[PeripheralCurve],
    p: &PowerProfile,
    d: &DutyCycleParams,
) -> Result<Vec<ComparisonRow>, EnergyError> {
    let serdes_pj = energy_per_bit(serdes_bw_bps, p, d)? * 1e12;
    Ok(curves
        .iter()
        .map(|c| {
            let pj = c.interpolate(bw_bps / 1e6);
            ComparisonRow { name: c.name, pj_per_bit: pj, ratio_vs_serdes: pj.map(|v| v / serdes_pj), pads: c.pad_count }
        })
        .collect())
}
