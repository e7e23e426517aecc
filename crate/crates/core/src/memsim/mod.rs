//! Memory-system model: memory-centric streaming render, access traces and
//! their classifier, caches, SRAM banking, gathering-unit timing and energy.

mod banks;
mod cache;
mod energy;
mod gu;
mod rit;
mod stream;
mod trace;

pub use banks::{simulate_bank_conflicts, BankLayout, BankMode, ConflictStats};
pub use cache::{simulate_cache, CacheStats, Policy};
pub use energy::{
    attribute_savings, energy_report, remote_model, EnergyModel, EnergyReport, RemoteCost, SavingsAttribution, RANDOM_UNITS, SRAM_UNITS,
    STREAMING_UNITS,
};
pub use gu::{gu_schedule, mac_cycles, simulate_gu, GuConfig, GuStats, GuUnit};
pub use rit::{build_rit, collect_samples, RayIndexTable, RitEntry, SampleLoc};
pub use stream::{frame_rays, render_memory_centric, trace_pixel_centric, MemoryCentricRender};
pub use trace::{classify_stream, classify_trace, tag_trace, AccessEvent, AccessKind, AccessTrace, Level, Tag, TraceStats};

use crate::scene::{FeatureGrid, MVoxelGrid, MlpWeights};

/// Alignment of each DRAM region.
pub const REGION_ALIGN: u64 = 4096;

fn align_up(x: u64, a: u64) -> u64 {
    x.div_ceil(a) * a
}

/// DRAM placement: MLP weights, then MVoxel feature blocks, then the RIT.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AddressMap {
    pub weights_base: u64,
    pub weights_bytes: u64,
    pub mgrid: MVoxelGrid,
    pub rit_base: u64,
}

impl AddressMap {
    pub fn new(mgrid: &MVoxelGrid, mlp: &MlpWeights) -> Self {
        let weights_bytes = (mlp.param_count() * crate::scene::FEATURE_BYTES) as u64;
        let mgrid = mgrid.clone().with_base(align_up(weights_bytes, REGION_ALIGN));
        let rit_base = align_up(mgrid.end_address(), REGION_ALIGN);
        AddressMap { weights_base: 0, weights_bytes, mgrid, rit_base }
    }

    pub fn for_grid(grid: &FeatureGrid, mlp: &MlpWeights, buffer_bytes: usize) -> crate::Result<Self> {
        Ok(Self::new(&MVoxelGrid::partition(grid, buffer_bytes)?, mlp))
    }

    pub fn feature_range(&self) -> std::ops::Range<u64> {
        self.mgrid.dram_base()..self.mgrid.end_address()
    }

    /// Whether an event lies inside the region its kind belongs to.
    pub fn contains(&self, e: &AccessEvent, rit_entries: usize) -> bool {
        let end = e.address + e.size as u64;
        match (e.level, e.kind) {
            (Level::Dram, AccessKind::Weights) => e.address >= self.weights_base && end <= self.weights_base + self.weights_bytes,
            (Level::Dram, AccessKind::Feature) => self.feature_range().contains(&e.address) && end <= self.mgrid.end_address(),
            (Level::Dram, AccessKind::Rit) => e.address >= self.rit_base && end <= self.rit_base + (rit_entries * RitEntry::BYTES) as u64,
            (Level::Sram, _) => end <= 2 * self.mgrid.block_bytes(),
        }
    }
}
