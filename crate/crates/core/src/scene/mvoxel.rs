use crate::error::{Error, Result};
use crate::scene::{FeatureGrid, FEATURE_BYTES};

/// Largest resident block edge (vertices per axis, halo included).
pub const DEFAULT_BLOCK: usize = 8;
/// Smallest block that still holds one whole cell.
pub const MIN_BLOCK: usize = 2;

/// MVoxel tiling of a feature grid.
///
/// Each MVoxel owns `block - 1` cells per axis. Its DRAM block holds the
/// `block³` vertices those cells touch, i.e. the owned vertices plus a
/// one-vertex halo replicated from the high-face neighbours, so every cell
/// can be interpolated from a single resident block. Blocks are laid out
/// back to back in MVoxel id order (x fastest); inside a block vertices are
/// stored vertex-major, `channels` fp16 values each. Blocks on the grid's
/// high edge are zero-padded to full size.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MVoxelGrid {
    grid_dims: [usize; 3],
    channels: usize,
    block: usize,
    mdims: [usize; 3],
    dram_base: u64,
}

impl MVoxelGrid {
    /// Picks the largest block edge (≤ 8) whose bytes fit `buffer_bytes`.
    pub fn partition(grid: &FeatureGrid, buffer_bytes: usize) -> Result<Self> {
        let per_vertex = grid.channels() * FEATURE_BYTES;
        let block = (MIN_BLOCK..=DEFAULT_BLOCK).rev().find(|&s| s * s * s * per_vertex <= buffer_bytes).ok_or_else(|| {
            Error::config(format!(
                "buffer of {buffer_bytes} bytes cannot hold a {MIN_BLOCK}x{MIN_BLOCK}x{MIN_BLOCK} block of {} channels",
                grid.channels()
            ))
        })?;
        Self::with_block(grid.dims(), grid.channels(), block, 0)
    }

    pub fn with_block(grid_dims: [usize; 3], channels: usize, block: usize, dram_base: u64) -> Result<Self> {
        if block < MIN_BLOCK {
            return Err(Error::config(format!("MVoxel block edge must be at least {MIN_BLOCK}")));
        }
        let cells = block - 1;
        let mdims = grid_dims.map(|n| (n - 1).div_ceil(cells));
        Ok(MVoxelGrid { grid_dims, channels, block, mdims, dram_base })
    }

    pub fn with_base(mut self, dram_base: u64) -> Self {
        self.dram_base = dram_base;
        self
    }

    /// Resident vertices per axis, halo included.
    pub fn block(&self) -> usize {
        self.block
    }

    pub fn cells_per_mvoxel(&self) -> usize {
        self.block - 1
    }

    pub fn mdims(&self) -> [usize; 3] {
        self.mdims
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn count(&self) -> usize {
        self.mdims.iter().product()
    }

    pub fn block_vertices(&self) -> usize {
        self.block * self.block * self.block
    }

    pub fn block_bytes(&self) -> u64 {
        (self.block_vertices() * self.channels * FEATURE_BYTES) as u64
    }

    pub fn vertex_bytes(&self) -> u64 {
        (self.channels * FEATURE_BYTES) as u64
    }

    pub fn dram_base(&self) -> u64 {
        self.dram_base
    }

    pub fn address(&self, m: usize) -> u64 {
        self.dram_base + m as u64 * self.block_bytes()
    }

    pub fn end_address(&self) -> u64 {
        self.address(self.count())
    }

    pub fn total_bytes(&self) -> u64 {
        self.count() as u64 * self.block_bytes()
    }

    pub fn mvoxel_id(&self, mc: [usize; 3]) -> usize {
        mc[0] + self.mdims[0] * (mc[1] + self.mdims[1] * mc[2])
    }

    pub fn mvoxel_coords(&self, m: usize) -> [usize; 3] {
        let x = m % self.mdims[0];
        let y = (m / self.mdims[0]) % self.mdims[1];
        [x, y, m / (self.mdims[0] * self.mdims[1])]
    }

    /// The MVoxel owning a cell (and hence every sample inside it).
    pub fn mvoxel_of_cell(&self, cell: [usize; 3]) -> usize {
        let k = self.cells_per_mvoxel();
        self.mvoxel_id([cell[0] / k, cell[1] / k, cell[2] / k])
    }

    fn local_linear(&self, l: [usize; 3]) -> usize {
        l[0] + self.block * (l[1] + self.block * l[2])
    }

    /// Block-local index of grid vertex `g` inside MVoxel `m`, if resident.
    pub fn local_index(&self, m: usize, g: [usize; 3]) -> Option<usize> {
        let mc = self.mvoxel_coords(m);
        let k = self.cells_per_mvoxel();
        let mut l = [0; 3];
        for a in 0..3 {
            let lo = mc[a] * k;
            if g[a] < lo || g[a] >= lo + self.block {
                return None;
            }
            l[a] = g[a] - lo;
        }
        Some(self.local_linear(l))
    }

    /// Owner MVoxel and block-local index of a vertex. Every vertex has
    /// exactly one owner; halo copies elsewhere are replicas.
    pub fn vertex_owner(&self, g: [usize; 3]) -> (usize, usize) {
        let k = self.cells_per_mvoxel();
        let mut mc = [0; 3];
        let mut l = [0; 3];
        for a in 0..3 {
            mc[a] = (g[a] / k).min(self.mdims[a] - 1);
            l[a] = g[a] - mc[a] * k;
        }
        (self.mvoxel_id(mc), self.local_linear(l))
    }

    /// DRAM address of the owner copy of vertex `g`.
    pub fn vertex_address(&self, g: [usize; 3]) -> u64 {
        let (m, local) = self.vertex_owner(g);
        self.address(m) + local as u64 * self.vertex_bytes()
    }

    /// Materializes MVoxel `m`'s DRAM block (`block³ × channels` values,
    /// vertex-major within the block, zero padding beyond the grid).
    pub fn load_block(&self, grid: &FeatureGrid, m: usize, out: &mut Vec<f32>) {
        let c = self.channels;
        out.clear();
        out.resize(self.block_vertices() * c, 0.0);
        let mc = self.mvoxel_coords(m);
        let k = self.cells_per_mvoxel();
        for lz in 0..self.block {
            for ly in 0..self.block {
                for lx in 0..self.block {
                    let g = [mc[0] * k + lx, mc[1] * k + ly, mc[2] * k + lz];
                    if (0..3).any(|a| g[a] >= self.grid_dims[a]) {
                        continue;
                    }
                    let dst = self.local_linear([lx, ly, lz]) * c;
                    out[dst..dst + c].copy_from_slice(grid.vertex_features(grid.vertex_id(g)));
                }
            }
        }
    }
}
