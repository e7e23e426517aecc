//! Metrics, the standard toy scene, baseline modes and experiment reports.

mod baselines;
mod experiment;

pub use baselines::{run_downsampled, run_temporal};
pub use experiment::{
    run_experiment, run_stages, ExperimentConfig, ImageConfig, MemsimConfig, Mode, OrbitConfig, PhiRow, Report, Stages, SweepRow,
    SUMMARY_HEADER,
};

pub use crate::image::psnr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::geometry::{CameraIntrinsics, Pose, Vec3};
use crate::image::DepthMap;
use crate::renderer::Frame;
use crate::scene::{Primitive, SceneSpec};
use crate::sparw::warp;

/// Percentage of target pixels with finite `tgt_depth` that receive at
/// least one splat when `reference` is warped to `tgt_pose`.
pub fn overlap_percentage(reference: &Frame, tgt_pose: &Pose, intr: &CameraIntrinsics, tgt_depth: &DepthMap) -> Result<f64> {
    let w = warp(reference, tgt_pose, intr)?;
    let finite: Vec<usize> = (0..w.valid.len()).filter(|&i| tgt_depth.data[i].is_finite()).collect();
    if finite.is_empty() {
        return Ok(0.0);
    }
    let landed = finite.iter().filter(|&&i| w.valid[i]).count();
    Ok(100.0 * landed as f64 / finite.len() as f64)
}

/// A closed pastel room with a few low-contrast objects. Every ray from
/// inside hits a surface, so warped frames have no void.
pub fn toy_scene_spec(resolution: usize, seed: u64) -> SceneSpec {
    let wall = 0.85;
    let t = 1.0;
    let slabs = [
        ([-t, -t, -t], [-wall, t, t], [0.78, 0.72, 0.66]),
        ([wall, -t, -t], [t, t, t], [0.70, 0.74, 0.70]),
        ([-t, -t, -t], [t, -wall, t], [0.80, 0.78, 0.74]),
        ([-t, wall, -t], [t, t, t], [0.66, 0.62, 0.58]),
        ([-t, -t, -t], [t, t, -wall], [0.72, 0.70, 0.76]),
        ([-t, -t, wall], [t, t, t], [0.74, 0.72, 0.68]),
    ];
    let mut prims: Vec<Primitive> = slabs.iter().map(|&(lo, hi, c)| Primitive::cuboid(lo, hi, c)).collect();
    prims.push(Primitive::sphere([0.0, 0.25, 0.35], 0.22, [0.70, 0.66, 0.72]));
    prims.push(Primitive::cuboid([-0.6, 0.45, 0.2], [-0.3, wall, 0.5], [0.68, 0.72, 0.74]));
    prims.push(Primitive::sphere([0.45, -0.2, 0.55], 0.16, [0.76, 0.70, 0.64]));
    SceneSpec { resolution: [resolution; 3], seed, texture: 0.08, texture_period: 1.2, ..SceneSpec::default() }.with_primitives(prims)
}

/// Camera orbit around a point in the room, looking at it.
pub fn orbit_trajectory(orbit: &OrbitConfig, seed: u64) -> Result<Vec<Pose>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = Vec3::from(orbit.target);
    (0..orbit.frames)
        .map(|k| {
            let a = (orbit.start_deg + orbit.degrees_per_frame * k as f64).to_radians();
            let mut eye = target + Vec3::new(a.sin(), 0.0, -a.cos()) * orbit.radius;
            eye.y += orbit.height;
            if orbit.jitter > 0.0 {
                eye += Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * orbit.jitter;
            }
            Pose::look_at(eye, target, Vec3::new(0.0, -1.0, 0.0))
        })
        .collect()
}
