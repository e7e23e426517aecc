use half::f16;

use crate::geometry::Ray;
use crate::renderer::{sample_t, RenderConfig};
use crate::scene::{trilinear_weights, CellCoord, FeatureGrid, MVoxelGrid};

/// One in-box ray sample and where it falls in the grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleLoc {
    pub ray: u32,
    pub sample: u32,
    pub loc: CellCoord,
}

/// Every in-box sample of `rays`, ordered by `(ray, sample)`.
pub fn collect_samples(rays: &[Ray], grid: &FeatureGrid, cfg: &RenderConfig) -> Vec<SampleLoc> {
    let mut out = Vec::new();
    for (r, ray) in rays.iter().enumerate() {
        for i in 0..cfg.samples {
            let p = ray.at(sample_t(cfg.near, cfg.far, cfg.samples, i).0);
            if grid.contains(&p) {
                out.push(SampleLoc { ray: r as u32, sample: i as u32, loc: grid.voxel_id(&p) });
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RitEntry {
    pub ray: u32,
    pub sample: u32,
    pub vids: [u32; 8],
    pub frac: [f32; 3],
}

impl RitEntry {
    /// Serialized size: eight u32 vertex ids and eight fp16 weights.
    pub const BYTES: usize = 48;

    pub fn weights(&self) -> [f32; 8] {
        trilinear_weights(self.frac)
    }

    pub fn to_bytes(&self) -> [u8; Self::BYTES] {
        let mut out = [0u8; Self::BYTES];
        for (k, v) in self.vids.iter().enumerate() {
            out[4 * k..4 * k + 4].copy_from_slice(&v.to_le_bytes());
        }
        for (k, w) in self.weights().iter().enumerate() {
            out[32 + 2 * k..34 + 2 * k].copy_from_slice(&f16::from_f32(*w).to_le_bytes());
        }
        out
    }

    /// Decodes the record's vids and fp16 weights.
    pub fn from_bytes(b: &[u8; Self::BYTES]) -> ([u32; 8], [f32; 8]) {
        let mut vids = [0u32; 8];
        let mut w = [0f32; 8];
        for k in 0..8 {
            vids[k] = u32::from_le_bytes(b[4 * k..4 * k + 4].try_into().unwrap());
            w[k] = f16::from_le_bytes([b[32 + 2 * k], b[33 + 2 * k]]).to_f32();
        }
        (vids, w)
    }
}

/// Per-MVoxel sample lists.
#[derive(Clone, Debug, PartialEq)]
pub struct RayIndexTable {
    pub lists: Vec<Vec<RitEntry>>,
}

impl RayIndexTable {
    pub fn entry_count(&self) -> usize {
        self.lists.iter().map(Vec::len).sum()
    }

    pub fn occupied(&self) -> usize {
        self.lists.iter().filter(|l| !l.is_empty()).count()
    }

    pub fn byte_size(&self) -> usize {
        self.entry_count() * RitEntry::BYTES
    }
}

/// Files each sample under the MVoxel owning its cell's minimum corner.
/// Input order `(ray, sample)` is preserved inside each list.
pub fn build_rit(samples: &[SampleLoc], grid: &FeatureGrid, mgrid: &MVoxelGrid) -> RayIndexTable {
    let mut lists = vec![Vec::new(); mgrid.count()];
    for s in samples {
        lists[mgrid.mvoxel_of_cell(s.loc.cell)].push(RitEntry {
            ray: s.ray,
            sample: s.sample,
            vids: grid.cell_vertices(s.loc.cell),
            frac: s.loc.frac_f32(),
        });
    }
    RayIndexTable { lists }
}
