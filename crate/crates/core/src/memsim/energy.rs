use serde::{Deserialize, Serialize};

use super::trace::{AccessTrace, Level, Tag};
use crate::error::{Error, Result};

/// Per-byte costs in units of `e_sram / 3`: random DRAM is 3× streaming DRAM
/// and 25× SRAM.
pub const RANDOM_UNITS: u128 = 75;
pub const STREAMING_UNITS: u128 = 25;
pub const SRAM_UNITS: u128 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyModel {
    /// Joules per SRAM byte.
    pub e_sram: f64,
    pub wireless_nj_per_byte: f64,
    pub wireless_bytes_per_second: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        EnergyModel { e_sram: 1e-12, wireless_nj_per_byte: 100.0, wireless_bytes_per_second: 1e7 }
    }
}

impl EnergyModel {
    pub fn e_dram_random(&self) -> f64 {
        25.0 * self.e_sram
    }

    pub fn e_dram_stream(&self) -> f64 {
        25.0 / 3.0 * self.e_sram
    }

    pub fn joules(&self, units: u128) -> f64 {
        units as f64 * self.e_sram / 3.0
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyReport {
    pub random_bytes: u64,
    pub streaming_bytes: u64,
    pub sram_bytes: u64,
    pub dram_random_j: f64,
    pub dram_streaming_j: f64,
    pub sram_j: f64,
    pub total_j: f64,
}

impl EnergyReport {
    pub fn from_bytes(random_bytes: u64, streaming_bytes: u64, sram_bytes: u64, em: &EnergyModel) -> Self {
        let r = em.joules(random_bytes as u128 * RANDOM_UNITS);
        let s = em.joules(streaming_bytes as u128 * STREAMING_UNITS);
        let m = em.joules(sram_bytes as u128 * SRAM_UNITS);
        EnergyReport {
            random_bytes,
            streaming_bytes,
            sram_bytes,
            dram_random_j: r,
            dram_streaming_j: s,
            sram_j: m,
            total_j: em.joules(Self::units_of(random_bytes, streaming_bytes, sram_bytes)),
        }
    }

    fn units_of(r: u64, s: u64, m: u64) -> u128 {
        r as u128 * RANDOM_UNITS + s as u128 * STREAMING_UNITS + m as u128 * SRAM_UNITS
    }

    /// Exact energy in `e_sram / 3` units.
    pub fn units(&self) -> u128 {
        Self::units_of(self.random_bytes, self.streaming_bytes, self.sram_bytes)
    }

    pub fn dram_units(&self) -> u128 {
        Self::units_of(self.random_bytes, self.streaming_bytes, 0)
    }

    pub fn dram_bytes(&self) -> u64 {
        self.random_bytes + self.streaming_bytes
    }

    pub fn dram_j(&self) -> f64 {
        self.dram_random_j + self.dram_streaming_j
    }
}

/// Energy of a tagged trace. DRAM events must have been classified.
pub fn energy_report(trace: &AccessTrace, em: &EnergyModel) -> Result<EnergyReport> {
    let (mut r, mut s, mut m) = (0u64, 0u64, 0u64);
    for e in &trace.events {
        let b = e.size as u64;
        match (e.level, e.tag) {
            (Level::Sram, _) => m += b,
            (Level::Dram, Tag::Random) => r += b,
            (Level::Dram, Tag::Streaming) => s += b,
            (Level::Dram, Tag::Unclassified) => return Err(Error::input("energy needs a classified trace")),
        }
    }
    Ok(EnergyReport::from_bytes(r, s, m, em))
}

/// Split of `baseline − improved` into moving fewer DRAM bytes (at the
/// baseline's mean DRAM cost), making the remaining bytes cheaper, and the
/// SRAM difference. The three parts sum to `total_j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SavingsAttribution {
    pub total_j: f64,
    pub traffic_reduction_j: f64,
    pub streaming_conversion_j: f64,
    pub sram_j: f64,
}

impl SavingsAttribution {
    pub fn traffic_share(&self) -> f64 {
        self.traffic_reduction_j / self.total_j
    }
}

pub fn attribute_savings(baseline: &EnergyReport, improved: &EnergyReport) -> SavingsAttribution {
    let b_bytes = baseline.dram_bytes() as f64;
    let mean = if b_bytes > 0.0 { baseline.dram_j() / b_bytes } else { 0.0 };
    let i_bytes = improved.dram_bytes() as f64;
    let traffic_reduction_j = (b_bytes - i_bytes) * mean;
    let streaming_conversion_j = i_bytes * mean - improved.dram_j();
    let sram_j = baseline.sram_j - improved.sram_j;
    SavingsAttribution { total_j: baseline.total_j - improved.total_j, traffic_reduction_j, streaming_conversion_j, sram_j }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RemoteCost {
    pub tx_latency_s: f64,
    pub tx_energy_j: f64,
}

/// Wireless cost of shipping `bytes` to a remote renderer client.
pub fn remote_model(bytes: u64, em: &EnergyModel) -> RemoteCost {
    let b = bytes as f64;
    RemoteCost { tx_latency_s: b / em.wireless_bytes_per_second, tx_energy_j: b * em.wireless_nj_per_byte / 1e9 }
}
