use serde::{Deserialize, Serialize};

use super::rit::RayIndexTable;
use crate::error::{Error, Result};
use crate::scene::{MVoxelGrid, MlpWeights, FEATURE_BYTES};

/// Cycles to read the eight vertices of one sample through one port.
pub const VERTEX_READS: u64 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuConfig {
    pub banks: usize,
    pub ports: usize,
    pub mac_rows: usize,
    pub mac_cols: usize,
    pub vft_bytes: usize,
    pub rit_entries_per_buffer: usize,
    pub bus_bytes_per_cycle: usize,
}

impl Default for GuConfig {
    fn default() -> Self {
        GuConfig { banks: 32, ports: 2, mac_rows: 24, mac_cols: 24, vft_bytes: 32768, rit_entries_per_buffer: 128, bus_bytes_per_cycle: 16 }
    }
}

impl GuConfig {
    pub fn validate(&self) -> Result<()> {
        if [self.banks, self.ports, self.mac_rows, self.mac_cols, self.bus_bytes_per_cycle, self.rit_entries_per_buffer].contains(&0) {
            return Err(Error::config("gathering-unit parameters must be positive"));
        }
        if !self.vft_bytes.is_multiple_of(self.banks) {
            return Err(Error::config("feature buffer does not split evenly into banks"));
        }
        Ok(())
    }

    pub fn bank_bytes(&self) -> usize {
        self.vft_bytes / self.banks
    }
}

/// One pipeline step: a channel segment of one MVoxel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GuUnit {
    pub mvoxel: usize,
    pub samples: usize,
    pub load_cycles: u64,
    pub compute_cycles: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GuStats {
    pub gather_cycles: u64,
    pub mvoxel_load_cycles: u64,
    pub total_cycles: u64,
}

/// Load and gather cost of every occupied MVoxel, split into channel
/// segments of at most `banks` channels.
pub fn gu_schedule(rit: &RayIndexTable, mgrid: &MVoxelGrid, gcfg: &GuConfig) -> Vec<GuUnit> {
    let c = mgrid.channels();
    let mut units = Vec::new();
    for (m, list) in rit.lists.iter().enumerate() {
        let s = list.len();
        if s == 0 {
            continue;
        }
        for seg in (0..c).step_by(gcfg.banks) {
            let ch = gcfg.banks.min(c - seg);
            let bytes = mgrid.block_vertices() * ch * FEATURE_BYTES;
            units.push(GuUnit {
                mvoxel: m,
                samples: s,
                load_cycles: bytes.div_ceil(gcfg.bus_bytes_per_cycle) as u64,
                compute_cycles: VERTEX_READS * s.div_ceil(gcfg.ports) as u64,
            });
        }
    }
    units
}

/// Double-buffered timing: the load of unit `i+1` overlaps the gather of
/// unit `i`, so `total = L_0 + Σ max(X_i, L_{i+1}) + X_last`.
pub fn simulate_gu(rit: &RayIndexTable, mgrid: &MVoxelGrid, gcfg: &GuConfig) -> Result<GuStats> {
    gcfg.validate()?;
    if mgrid.block_bytes() as usize > gcfg.vft_bytes {
        return Err(Error::config(format!("MVoxel of {} bytes exceeds the {}-byte feature buffer", mgrid.block_bytes(), gcfg.vft_bytes)));
    }
    Ok(pipeline_totals(&gu_schedule(rit, mgrid, gcfg)))
}

pub(crate) fn pipeline_totals(units: &[GuUnit]) -> GuStats {
    let (Some(first), Some(last)) = (units.first(), units.last()) else {
        return GuStats::default();
    };
    let overlap: u64 = units.windows(2).map(|w| w[0].compute_cycles.max(w[1].load_cycles)).sum();
    GuStats {
        gather_cycles: units.iter().map(|u| u.compute_cycles).sum(),
        mvoxel_load_cycles: units.iter().map(|u| u.load_cycles).sum(),
        total_cycles: first.load_cycles + overlap + last.compute_cycles,
    }
}

/// MLP cycles on the MAC array: each layer is tiled into
/// `ceil(in/rows) × ceil(out/cols)` passes per sample.
pub fn mac_cycles(samples: u64, mlp: &MlpWeights, gcfg: &GuConfig) -> u64 {
    mlp.layer_shapes().iter().map(|&(i, o)| (i.div_ceil(gcfg.mac_rows) * o.div_ceil(gcfg.mac_cols)) as u64 * samples).sum()
}
