use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pose};
use crate::image::{psnr, DepthMap};
use crate::renderer::{render_frame, Frame, RenderConfig};
use crate::scene::Scene;
use crate::sparw::{render_target, FrameKind, LedgerRow, SequenceOutput, WarpConfig};

fn check_inputs(trajectory: &[Pose], ground_truth: Option<&[Frame]>) -> Result<()> {
    if trajectory.is_empty() {
        return Err(Error::input("empty trajectory"));
    }
    if ground_truth.is_some_and(|g| g.len() != trajectory.len()) {
        return Err(Error::input("ground truth length differs from the trajectory"));
    }
    Ok(())
}

fn empty_output() -> SequenceOutput {
    SequenceOutput { frames: Vec::new(), references: Vec::new(), schedule: Vec::new(), ledger: Vec::new() }
}

/// Temporal warping: a full render every `window` frames, and in between
/// each frame is warped from the previously displayed one, so errors
/// accumulate along the chain.
pub fn run_temporal(
    trajectory: &[Pose],
    intr: &CameraIntrinsics,
    scene: &Scene,
    cfg: &RenderConfig,
    wcfg: &WarpConfig,
    ground_truth: Option<&[Frame]>,
) -> Result<SequenceOutput> {
    check_inputs(trajectory, ground_truth)?;
    wcfg.validate()?;
    let mut out = empty_output();
    for (k, pose) in trajectory.iter().enumerate() {
        let truth = ground_truth.map(|g| &g[k]);
        let (frame, row) = if k % wcfg.window == 0 {
            let f = render_frame(pose, intr, scene, cfg)?;
            let row = LedgerRow {
                frame: k,
                kind: FrameKind::Reference,
                warped_px: 0,
                sparse_px: 0,
                void_px: 0,
                psnr_vs_full: truth.map(|g| psnr(&f.color, &g.color)).transpose()?,
                full_px: intr.pixel_count(),
            };
            out.references.push(f.clone());
            (f, row)
        } else {
            let prev = out.frames.last().expect("frame 0 is a full render");
            let t = render_target(prev, pose, intr, scene, cfg, wcfg)?;
            let row = LedgerRow {
                frame: k,
                kind: FrameKind::Target,
                warped_px: t.counts.warped,
                sparse_px: t.counts.disoccluded,
                void_px: t.counts.void,
                psnr_vs_full: truth.map(|g| psnr(&t.frame.color, &g.color)).transpose()?,
                full_px: 0,
            };
            (t.frame, row)
        };
        out.frames.push(frame);
        out.ledger.push(row);
    }
    Ok(out)
}

fn resize_nearest(src: &[f32], sw: usize, sh: usize, width: usize, height: usize) -> Vec<f32> {
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        let sy = (y * sh / height).min(sh - 1);
        for x in 0..width {
            let sx = (x * sw / width).min(sw - 1);
            out.push(src[sy * sw + sx]);
        }
    }
    out
}

/// Renders every frame at half resolution, then upsamples color bilinearly
/// and depth and opacity by nearest neighbour.
pub fn run_downsampled(
    trajectory: &[Pose],
    intr: &CameraIntrinsics,
    scene: &Scene,
    cfg: &RenderConfig,
    ground_truth: Option<&[Frame]>,
) -> Result<SequenceOutput> {
    check_inputs(trajectory, ground_truth)?;
    let half = intr.scaled(0.5)?;
    let (w, h) = (intr.width, intr.height);
    let mut out = empty_output();
    for (k, pose) in trajectory.iter().enumerate() {
        let low = render_frame(pose, &half, scene, cfg)?;
        let frame = Frame {
            color: low.color.resize_bilinear(w, h),
            depth: DepthMap { width: w, height: h, data: resize_nearest(&low.depth.data, half.width, half.height, w, h) },
            opacity: resize_nearest(&low.opacity, half.width, half.height, w, h),
            pose: *pose,
            intr: *intr,
        };
        out.ledger.push(LedgerRow {
            frame: k,
            kind: FrameKind::Downsampled,
            warped_px: 0,
            sparse_px: 0,
            void_px: 0,
            psnr_vs_full: ground_truth.map(|g| psnr(&frame.color, &g[k].color)).transpose()?,
            full_px: half.pixel_count(),
        });
        out.frames.push(frame);
    }
    Ok(out)
}
