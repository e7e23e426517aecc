use rayon::prelude::*;

use super::rit::{build_rit, collect_samples, RayIndexTable, RitEntry};
use super::trace::{AccessEvent, AccessKind, AccessTrace, Level};
use super::AddressMap;
use crate::error::Result;
use crate::geometry::{pixel_ray, CameraIntrinsics, Pose, Ray};
use crate::renderer::{
    decode_with, march_ray_observed, pixel_cam_z, pixel_value, sample_t, Compositor, Frame, RenderConfig, SampleResult, Scratch,
};
use crate::scene::{trilinear_into, Scene};

/// RIT entries fetched per DRAM read.
pub const RIT_CHUNK: usize = 128;

/// Camera rays in row-major pixel order.
pub fn frame_rays(pose: &Pose, intr: &CameraIntrinsics) -> Vec<Ray> {
    (0..intr.pixel_count()).map(|i| pixel_ray(intr, pose, i % intr.width, i / intr.width)).collect()
}

#[derive(Clone, Debug)]
pub struct MemoryCentricRender {
    pub frame: Frame,
    pub trace: AccessTrace,
    pub rit: RayIndexTable,
    pub map: AddressMap,
}

fn eval_mvoxel(
    scene: &Scene,
    map: &AddressMap,
    m: usize,
    list: &[RitEntry],
    block: &mut Vec<f32>,
    hidden: &mut Vec<f32>,
) -> Vec<SampleResult> {
    let grid = &scene.grid;
    let mg = &map.mgrid;
    let c = grid.channels();
    mg.load_block(grid, m, block);
    let mut feature = vec![0.0; c];
    list.iter()
        .map(|e| {
            let corners = e.vids.map(|v| {
                let l = mg.local_index(m, grid.vertex_coords(v as usize)).expect("RIT vertex resident in its MVoxel");
                &block[l * c..(l + 1) * c]
            });
            trilinear_into(e.frac, corners, &mut feature);
            decode_with(&feature, &scene.mlp, hidden)
        })
        .collect()
}

/// Streams MVoxels in address order, decoding every resident sample, then
/// composites each ray in sample order.
pub fn render_memory_centric(
    pose: &Pose,
    intr: &CameraIntrinsics,
    scene: &Scene,
    map: &AddressMap,
    cfg: &RenderConfig,
) -> Result<MemoryCentricRender> {
    cfg.validate()?;
    let rays = frame_rays(pose, intr);
    let grid = &scene.grid;
    let rit = build_rit(&collect_samples(&rays, grid, cfg), grid, &map.mgrid);
    let mg = &map.mgrid;

    let occupied: Vec<usize> = (0..mg.count()).filter(|&m| !rit.lists[m].is_empty()).collect();
    let results: Vec<Vec<SampleResult>> = occupied
        .par_iter()
        .map_init(|| (Vec::new(), Vec::new()), |(block, hidden), &m| eval_mvoxel(scene, map, m, &rit.lists[m], block, hidden))
        .collect();

    let n = cfg.samples;
    let mut per_sample: Vec<Option<SampleResult>> = vec![None; rays.len() * n];
    let mut trace = AccessTrace::default();
    trace.push(AccessEvent::new(Level::Dram, AccessKind::Weights, map.weights_base, map.weights_bytes as u32));
    let vb = mg.vertex_bytes();
    let mut rit_cursor = map.rit_base;
    for (slot, (&m, res)) in occupied.iter().zip(&results).enumerate() {
        trace.push(AccessEvent::new(Level::Dram, AccessKind::Feature, mg.address(m), mg.block_bytes() as u32));
        let buffer = (slot % 2) as u64 * mg.block_bytes();
        let list = &rit.lists[m];
        for chunk in list.chunks(RIT_CHUNK) {
            let bytes = (chunk.len() * RitEntry::BYTES) as u64;
            trace.push(AccessEvent::new(Level::Dram, AccessKind::Rit, rit_cursor, bytes as u32));
            rit_cursor += bytes;
            for e in chunk {
                for v in e.vids {
                    let l = mg.local_index(m, grid.vertex_coords(v as usize)).expect("resident vertex") as u64;
                    trace.push(AccessEvent::new(Level::Sram, AccessKind::Feature, buffer + l * vb, vb as u32));
                }
            }
        }
        for (e, r) in list.iter().zip(res) {
            per_sample[e.ray as usize * n + e.sample as usize] = Some(*r);
        }
    }

    let mut frame = Frame::blank(*pose, *intr, cfg.background);
    for (ray, samples) in per_sample.chunks(n).enumerate() {
        let mut comp = Compositor::new(cfg.termination);
        for (i, r) in samples.iter().enumerate() {
            if let Some(r) = r {
                let (t, delta) = sample_t(cfg.near, cfg.far, n, i);
                comp.push(r, t, delta);
            }
        }
        let px = pixel_value(&comp, pixel_cam_z(intr, ray % intr.width, ray / intr.width), cfg);
        crate::renderer::write_pixel(&mut frame, ray, &px);
    }
    Ok(MemoryCentricRender { frame, trace, rit, map: map.clone() })
}

/// Ray-major feature reads of the pixel-centric renderer: eight owner-copy
/// vertex reads per gathered sample, stopping where the ray terminates,
/// after one read of the MLP weights.
pub fn trace_pixel_centric(
    pose: &Pose,
    intr: &CameraIntrinsics,
    scene: &Scene,
    map: &AddressMap,
    cfg: &RenderConfig,
) -> Result<AccessTrace> {
    cfg.validate()?;
    let rays = frame_rays(pose, intr);
    let grid = &scene.grid;
    let mg = &map.mgrid;
    let vb = mg.vertex_bytes() as u32;
    let per_ray: Vec<Vec<AccessEvent>> = rays
        .par_iter()
        .map_init(Scratch::default, |scratch, ray| {
            let mut evs = Vec::new();
            march_ray_observed(ray, scene, cfg, scratch, |loc| {
                for v in grid.cell_vertices(loc.cell) {
                    let addr = mg.vertex_address(grid.vertex_coords(v as usize));
                    evs.push(AccessEvent::new(Level::Dram, AccessKind::Feature, addr, vb));
                }
            });
            evs
        })
        .collect();
    let mut trace = AccessTrace::default();
    if per_ray.iter().any(|r| !r.is_empty()) {
        trace.push(AccessEvent::new(Level::Dram, AccessKind::Weights, map.weights_base, map.weights_bytes as u32));
    }
    trace.events.extend(per_ray.into_iter().flatten());
    Ok(trace)
}
