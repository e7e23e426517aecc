//! Sparse radiance warping: reuse a reference frame's pixels at nearby
//! poses and NeRF-render only what the warp cannot supply.

use std::fmt::Write as _;
use std::ops::Range;

use nalgebra::Rotation3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{direction_angle, project, transform_points, unproject, CameraIntrinsics, Pose, ProjectedPoint};
use crate::image::{psnr, DepthMap, Image};
use crate::renderer::{render_frame, render_sparse, Frame, RenderConfig};
use crate::scene::Scene;

/// Relative depth difference under which two splats count as a tie.
pub const DEPTH_TIE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WarpConfig {
    /// Target frames per reference frame.
    pub window: usize,
    /// Largest accepted warp angle in radians; +∞ disables the test.
    pub phi: f64,
    /// Seconds between displayed frames.
    pub frame_interval: f64,
}

impl Default for WarpConfig {
    fn default() -> Self {
        WarpConfig { window: 16, phi: f64::INFINITY, frame_interval: 1.0 / 30.0 }
    }
}

impl WarpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::config("warp window must be at least 1"));
        }
        if self.phi.is_nan() || self.phi < 0.0 {
            return Err(Error::config(format!("warp angle threshold must be non-negative, got {}", self.phi)));
        }
        if !(self.frame_interval > 0.0) {
            return Err(Error::config("frame interval must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum HoleKind {
    Warped,
    /// No splat landed but scene geometry is there; needs NeRF.
    Disoccluded,
    /// No splat and empty space behind the pixel; takes the background.
    Void,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WarpResult {
    pub color: Image,
    pub depth: DepthMap,
    pub opacity: Vec<f32>,
    pub valid: Vec<bool>,
    pub hole_kind: Vec<HoleKind>,
    /// Angle between the reference and target rays through the splatted
    /// point; NaN where nothing landed.
    pub angles: Vec<f64>,
}

impl WarpResult {
    pub fn count(&self, kind: HoleKind) -> usize {
        self.hole_kind.iter().filter(|&&k| k == kind).count()
    }

    fn demote(&mut self, i: usize, kind: HoleKind) {
        self.valid[i] = false;
        self.hole_kind[i] = kind;
        self.color.data[i] = [0.0; 3];
        self.depth.data[i] = f32::INFINITY;
        self.opacity[i] = 0.0;
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Splat {
    pub depth: f64,
    /// Linear index of the source pixel in the reference frame.
    pub source: usize,
    /// Index into the projected point list.
    pub point: usize,
}

fn wins(depth: f64, source: usize, cur: &Splat) -> bool {
    let tol = DEPTH_TIE * depth.max(cur.depth);
    if (depth - cur.depth).abs() <= tol {
        source < cur.source
    } else {
        depth < cur.depth
    }
}

/// Nearest-pixel z-buffer. `sources[k]` is the reference pixel of point `k`.
pub fn zbuffer_splat(points: &[ProjectedPoint], sources: &[usize], width: usize, height: usize) -> Vec<Option<Splat>> {
    let mut buf: Vec<Option<Splat>> = vec![None; width * height];
    for (k, p) in points.iter().enumerate() {
        let (x, y) = (p.x.floor() as usize, p.y.floor() as usize);
        if x >= width || y >= height {
            continue;
        }
        let slot = &mut buf[x + y * width];
        let source = sources[k];
        if slot.as_ref().is_none_or(|cur| wins(p.depth, source, cur)) {
            *slot = Some(Splat { depth: p.depth, source, point: k });
        }
    }
    buf
}

/// Forward-warps `reference` to `tgt_pose`. Landed pixels are `Warped`,
/// everything else `Void` until [`classify_holes`] runs.
pub fn warp(reference: &Frame, tgt_pose: &Pose, intr: &CameraIntrinsics) -> Result<WarpResult> {
    let cloud = unproject(&reference.color, &reference.depth, &reference.intr)?;
    let moved = transform_points(&cloud, &Pose::relative(&reference.pose, tgt_pose));
    let proj = project(&moved, intr);
    let rw = reference.intr.width;
    let sources: Vec<usize> = proj
        .points
        .iter()
        .map(|p| {
            let (x, y) = cloud.source_pixels[p.index];
            x as usize + y as usize * rw
        })
        .collect();
    let splats = zbuffer_splat(&proj.points, &sources, intr.width, intr.height);

    let n = intr.pixel_count();
    let mut out = WarpResult {
        color: Image::new(intr.width, intr.height, [0.0; 3]),
        depth: DepthMap::new(intr.width, intr.height, f32::INFINITY),
        opacity: vec![0.0; n],
        valid: vec![false; n],
        hole_kind: vec![HoleKind::Void; n],
        angles: vec![f64::NAN; n],
    };
    let (c_ref, c_tgt) = (reference.pose.center(), tgt_pose.center());
    for (i, s) in splats.iter().enumerate() {
        let Some(s) = s else { continue };
        let p = &proj.points[s.point];
        out.color.data[i] = p.color;
        out.depth.data[i] = p.depth as f32;
        out.opacity[i] = reference.opacity[s.source];
        out.valid[i] = true;
        out.hole_kind[i] = HoleKind::Warped;
        let world = reference.pose.apply(&cloud.points[p.index]);
        out.angles[i] = direction_angle(&(world - c_ref).normalize(), &(world - c_tgt).normalize());
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PixelCounts {
    pub warped: usize,
    pub disoccluded: usize,
    pub void: usize,
}

impl PixelCounts {
    pub fn of(w: &WarpResult) -> Self {
        PixelCounts { warped: w.count(HoleKind::Warped), disoccluded: w.count(HoleKind::Disoccluded), void: w.count(HoleKind::Void) }
    }

    pub fn total(&self) -> usize {
        self.warped + self.disoccluded + self.void
    }
}

/// Splits unlanded pixels by the target-view geometry depth: finite means
/// disoccluded, +∞ means void. Without a proxy every unlanded pixel is
/// treated as disoccluded.
pub fn classify_holes(w: &mut WarpResult, proxy_depth: Option<&DepthMap>) -> PixelCounts {
    for i in 0..w.valid.len() {
        if w.valid[i] {
            continue;
        }
        let geometry = proxy_depth.is_none_or(|d| d.data[i].is_finite());
        w.hole_kind[i] = if geometry { HoleKind::Disoccluded } else { HoleKind::Void };
    }
    PixelCounts::of(w)
}

/// Demotes warped pixels whose angle is at least `phi`. Returns how many.
pub fn apply_phi(w: &mut WarpResult, phi: f64) -> usize {
    let mut demoted = 0;
    for i in 0..w.valid.len() {
        if w.valid[i] && w.angles[i] >= phi {
            w.demote(i, HoleKind::Disoccluded);
            demoted += 1;
        }
    }
    demoted
}

#[derive(Clone, Debug, PartialEq)]
pub struct TargetFrame {
    pub frame: Frame,
    pub counts: PixelCounts,
    pub samples_issued: usize,
}

impl TargetFrame {
    pub fn nerf_fraction(&self) -> f64 {
        self.counts.disoccluded as f64 / self.counts.total() as f64
    }
}

/// Warps `reference`, fills disocclusions with sparse NeRF and void with the
/// background.
pub fn render_target(
    reference: &Frame,
    tgt_pose: &Pose,
    intr: &CameraIntrinsics,
    scene: &Scene,
    cfg: &RenderConfig,
    wcfg: &WarpConfig,
) -> Result<TargetFrame> {
    let mut w = warp(reference, tgt_pose, intr)?;
    let proxy = scene.proxy_depth(tgt_pose, intr);
    classify_holes(&mut w, proxy.as_ref());
    apply_phi(&mut w, wcfg.phi);
    let mask: Vec<bool> = w.hole_kind.iter().map(|&k| k == HoleKind::Disoccluded).collect();
    let sparse = render_sparse(tgt_pose, intr, scene, cfg, &mask)?;

    let mut frame = Frame::blank(*tgt_pose, *intr, cfg.background);
    for i in 0..mask.len() {
        if w.valid[i] {
            frame.color.data[i] = w.color.data[i];
            frame.depth.data[i] = w.depth.data[i];
            frame.opacity[i] = w.opacity[i];
        }
    }
    sparse.apply(&mut frame);
    Ok(TargetFrame { frame, counts: PixelCounts::of(&w), samples_issued: sparse.samples_issued })
}

/// Reference pose placed `window / 2` frames ahead of `t2` at the velocity
/// from `t1` to `t2`; the rotation follows the same relative rotation scaled
/// in axis-angle form.
pub fn extrapolate_reference_pose(t1: &Pose, t2: &Pose, wcfg: &WarpConfig) -> Pose {
    let dt = wcfg.frame_interval;
    let velocity = (t2.translation - t1.translation) / dt;
    let lead = wcfg.window as f64 / 2.0 * dt;
    let translation = t2.translation + velocity * lead;
    let step = Rotation3::from_matrix_unchecked(t2.rotation * t1.rotation.transpose());
    let spin = Rotation3::from_scaled_axis(step.scaled_axis() * (lead / dt));
    let r2 = Rotation3::from_matrix_unchecked(t2.rotation);
    Pose::from_rotation(spin * r2, translation)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrameKind {
    /// Full render, on or off the trajectory.
    Reference,
    /// Warped from a reference with sparse fill.
    Target,
    /// Rendered at reduced resolution and upsampled.
    Downsampled,
}

impl FrameKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FrameKind::Reference => "reference",
            FrameKind::Target => "target",
            FrameKind::Downsampled => "downsampled",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleEntry {
    pub kind: FrameKind,
    /// Displayed frame; for references, the first frame they serve.
    pub frame: usize,
    pub pose: Pose,
    pub reference: usize,
    /// Reference whose targets this reference is rendered alongside.
    pub concurrent_with: Option<usize>,
}

/// Frames served by each reference. Reference 0 is frame 0 itself and also
/// serves frame 1; reference `j ≥ 1` serves `[2 + (j-1)N, 2 + jN)`.
pub fn reference_spans(frames: usize, window: usize) -> Vec<Range<usize>> {
    let mut spans = Vec::from([0..frames.min(2)]);
    let mut s = 2;
    while s < frames {
        spans.push(s..(s + window).min(frames));
        s += window;
    }
    spans
}

#[derive(Clone, Debug, PartialEq)]
pub struct LedgerRow {
    pub frame: usize,
    pub kind: FrameKind,
    pub warped_px: usize,
    pub sparse_px: usize,
    pub void_px: usize,
    pub psnr_vs_full: Option<f64>,
    pub full_px: usize,
}

pub fn format_psnr(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v:.4}")
    }
}

pub fn ledger_csv(rows: &[LedgerRow]) -> String {
    let mut s = String::from("frame,kind,warped_px,sparse_px,void_px,psnr_vs_full,full_px\n");
    for r in rows {
        let p = r.psnr_vs_full.map(format_psnr).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{},{},{},{}", r.frame, r.kind.as_str(), r.warped_px, r.sparse_px, r.void_px, p, r.full_px);
    }
    s
}

#[derive(Clone, Debug)]
pub struct SequenceOutput {
    /// One displayed frame per trajectory pose.
    pub frames: Vec<Frame>,
    pub references: Vec<Frame>,
    pub schedule: Vec<ScheduleEntry>,
    pub ledger: Vec<LedgerRow>,
}

impl SequenceOutput {
    /// Full-frame plus sparse NeRF pixels over the whole sequence.
    pub fn nerf_pixels(&self) -> usize {
        self.ledger.iter().map(|r| r.full_px + r.sparse_px).sum()
    }

    /// Mean PSNR over frames that are not full renders, when ground truth
    /// was supplied.
    pub fn mean_target_psnr(&self) -> Option<f64> {
        mean_target_psnr(&self.ledger)
    }
}

pub fn mean_target_psnr(rows: &[LedgerRow]) -> Option<f64> {
    let vals: Vec<f64> = rows.iter().filter(|r| r.kind != FrameKind::Reference).filter_map(|r| r.psnr_vs_full).collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Renders a trajectory with extrapolated references. `ground_truth`, when
/// given, holds a full render per pose and fills the ledger's PSNR column.
pub fn run_sequence(
    trajectory: &[Pose],
    intr: &CameraIntrinsics,
    scene: &Scene,
    cfg: &RenderConfig,
    wcfg: &WarpConfig,
    ground_truth: Option<&[Frame]>,
) -> Result<SequenceOutput> {
    if trajectory.len() < 2 {
        return Err(Error::input(format!("a warped sequence needs at least 2 poses, got {}", trajectory.len())));
    }
    wcfg.validate()?;
    if ground_truth.is_some_and(|g| g.len() != trajectory.len()) {
        return Err(Error::input("ground truth length differs from the trajectory"));
    }
    let full_px = intr.pixel_count();
    let mut frames: Vec<Option<Frame>> = vec![None; trajectory.len()];
    let mut references = Vec::new();
    let mut schedule = Vec::new();
    let mut ledger = Vec::new();

    for (j, span) in reference_spans(trajectory.len(), wcfg.window).into_iter().enumerate() {
        let pose =
            if j == 0 { trajectory[0] } else { extrapolate_reference_pose(&trajectory[span.start - 2], &trajectory[span.start - 1], wcfg) };
        let reference = render_frame(&pose, intr, scene, cfg)?;
        schedule.push(ScheduleEntry {
            kind: FrameKind::Reference,
            frame: span.start,
            pose,
            reference: j,
            concurrent_with: j.checked_sub(1),
        });
        let bootstrap_psnr = match (j, ground_truth) {
            (0, Some(g)) => Some(psnr(&reference.color, &g[0].color)?),
            _ => None,
        };
        ledger.push(LedgerRow {
            frame: span.start,
            kind: FrameKind::Reference,
            warped_px: 0,
            sparse_px: 0,
            void_px: 0,
            psnr_vs_full: bootstrap_psnr,
            full_px,
        });
        let targets: Vec<usize> = span.clone().filter(|&f| !(j == 0 && f == 0)).collect();
        let rendered: Vec<TargetFrame> =
            targets.par_iter().map(|&f| render_target(&reference, &trajectory[f], intr, scene, cfg, wcfg)).collect::<Result<_>>()?;
        for (&f, t) in targets.iter().zip(rendered) {
            schedule.push(ScheduleEntry { kind: FrameKind::Target, frame: f, pose: trajectory[f], reference: j, concurrent_with: None });
            let p = ground_truth.map(|g| psnr(&t.frame.color, &g[f].color)).transpose()?;
            ledger.push(LedgerRow {
                frame: f,
                kind: FrameKind::Target,
                warped_px: t.counts.warped,
                sparse_px: t.counts.disoccluded,
                void_px: t.counts.void,
                psnr_vs_full: p,
                full_px: 0,
            });
            frames[f] = Some(t.frame);
        }
        if j == 0 {
            frames[0] = Some(reference.clone());
        }
        references.push(reference);
    }
    let frames = frames.into_iter().map(|f| f.expect("every pose is covered by a reference span")).collect();
    Ok(SequenceOutput { frames, references, schedule, ledger })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{PointCloud, Vec3};
    use crate::scene::{build_synthetic_scene, Primitive, SceneSpec};
    use proptest::prelude::*;

    fn wall_scene(n: usize) -> Scene {
        let spec = SceneSpec { resolution: [n; 3], channels: 4, ..SceneSpec::default() }.with_primitives(vec![
            Primitive::cuboid([-1.0, -1.0, 0.6], [1.0, 1.0, 0.9], [0.6, 0.5, 0.4]),
            Primitive::cuboid([-0.25, -0.6, -0.5], [0.25, 0.6, -0.3], [0.3, 0.6, 0.5]),
        ]);
        build_synthetic_scene(&spec).unwrap()
    }

    fn cfg() -> RenderConfig {
        RenderConfig { samples: 96, near: 1.0, far: 4.5, ..RenderConfig::default() }
    }

    fn cam(eye: Vec3) -> Pose {
        Pose::look_at(eye, eye + Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.0, -1.0, 0.0)).unwrap()
    }

    fn intr(n: usize, hfov: f64) -> CameraIntrinsics {
        CameraIntrinsics::from_fov(n, n, hfov).unwrap()
    }

    #[test]
    fn identity_warp_reproduces_reference() {
        let scene = wall_scene(24);
        let i = intr(40, 40.0);
        let pose = cam(Vec3::new(0.1, -0.05, -3.0));
        let r = render_frame(&pose, &i, &scene, &cfg()).unwrap();
        let mut w = warp(&r, &pose, &i).unwrap();
        let finite = r.depth.data.iter().filter(|d| d.is_finite()).count();
        assert!(finite > 0);
        for k in 0..r.pixel_count() {
            assert_eq!(w.valid[k], r.depth.data[k].is_finite());
            if w.valid[k] {
                assert_eq!(w.color.data[k], r.color.data[k]);
                assert!(w.angles[k].abs() < 1e-6);
            }
        }
        let counts = classify_holes(&mut w, scene.proxy_depth(&pose, &i).as_ref());
        assert_eq!(counts.warped, finite);
        // unlanded rim pixels have proxy geometry but never had a finite depth
        let t = render_target(&r, &pose, &i, &scene, &cfg(), &WarpConfig::default()).unwrap();
        for k in 0..r.pixel_count() {
            if r.depth.data[k].is_finite() {
                assert_eq!(t.frame.color.data[k], r.color.data[k]);
            }
        }
        // everything else came from NeRF or is exact background
        let full = render_frame(&pose, &i, &scene, &cfg()).unwrap();
        assert_eq!(t.frame.color, full.color);
    }

    #[test]
    fn small_rotation_keeps_most_pixels() {
        let scene = wall_scene(24);
        let i = intr(48, 30.0);
        let pose = cam(Vec3::new(0.0, 0.0, -3.0));
        let r = render_frame(&pose, &i, &scene, &cfg()).unwrap();
        let rot = Rotation3::from_axis_angle(&Vec3::y_axis(), 1.5f64.to_radians());
        let tgt = Pose::from_rotation(rot * Rotation3::from_matrix_unchecked(pose.rotation), pose.translation);
        let w = warp(&r, &tgt, &i).unwrap();
        let truth = scene.analytic.as_ref().unwrap().depth_map(&tgt, &i);
        let finite: Vec<usize> = (0..w.valid.len()).filter(|&k| truth.data[k].is_finite()).collect();
        let landed = finite.iter().filter(|&&k| w.valid[k]).count();
        assert!(landed as f64 >= 0.95 * finite.len() as f64, "{landed} of {}", finite.len());
    }

    fn pp(x: f64, y: f64, depth: f64, index: usize) -> ProjectedPoint {
        ProjectedPoint { x, y, depth, color: [index as f32; 3], index }
    }

    #[test]
    fn nearer_splat_wins() {
        let pts = vec![pp(0.7, 0.2, 3.0, 0), pp(0.1, 0.9, 2.0, 1), pp(1.5, 0.5, 5.0, 2)];
        let b = zbuffer_splat(&pts, &[0, 1, 2], 2, 1);
        assert_eq!(b[0].unwrap().point, 1);
        assert_eq!(b[1].unwrap().point, 2);
        // ties within the relative epsilon go to the lower source pixel
        let tie = vec![pp(0.5, 0.5, 2.0, 0), pp(0.5, 0.5, 2.0 * (1.0 + 1e-7), 1)];
        assert_eq!(zbuffer_splat(&tie, &[9, 4], 1, 1)[0].unwrap().source, 4);
        assert_eq!(zbuffer_splat(&[tie[1], tie[0]], &[4, 9], 1, 1)[0].unwrap().source, 4);
    }

    proptest! {
        #[test]
        fn splat_is_order_independent(
            pts in prop::collection::vec((0.0f64..4.0, 0.0f64..3.0, 1.0f64..2.0), 1..60),
            seed in any::<u64>(),
        ) {
            let points: Vec<ProjectedPoint> = pts.iter().enumerate().map(|(k, &(x, y, d))| pp(x, y, d, k)).collect();
            let sources: Vec<usize> = (0..points.len()).collect();
            let a = zbuffer_splat(&points, &sources, 4, 3);
            let mut order: Vec<usize> = (0..points.len()).collect();
            let mut s = seed;
            for k in (1..order.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                order.swap(k, (s >> 33) as usize % (k + 1));
            }
            let shuffled: Vec<ProjectedPoint> = order.iter().map(|&k| points[k]).collect();
            let ssrc: Vec<usize> = order.clone();
            let b = zbuffer_splat(&shuffled, &ssrc, 4, 3);
            for (x, y) in a.iter().zip(&b) {
                prop_assert_eq!(x.map(|s| s.source), y.map(|s| s.source));
            }
        }
    }

    #[test]
    fn empty_scene_is_all_void() {
        let scene = build_synthetic_scene(&SceneSpec { resolution: [8; 3], channels: 4, ..SceneSpec::default() }).unwrap();
        let i = intr(16, 40.0);
        let pose = cam(Vec3::new(0.0, 0.0, -3.0));
        let r = render_frame(&pose, &i, &scene, &cfg()).unwrap();
        let t = render_target(&r, &cam(Vec3::new(0.2, 0.0, -3.0)), &i, &scene, &cfg(), &WarpConfig::default()).unwrap();
        assert_eq!(t.counts.void, i.pixel_count());
        assert_eq!(t.samples_issued, 0);
    }

    #[test]
    fn parallax_band_matches_analytic_width() {
        let scene = wall_scene(32);
        let i = intr(96, 40.0);
        let c = cfg();
        let pose = cam(Vec3::new(0.0, 0.0, -3.0));
        let r = render_frame(&pose, &i, &scene, &c).unwrap();
        let dx = 0.3;
        let tgt = cam(Vec3::new(dx, 0.0, -3.0));
        let mut w = warp(&r, &tgt, &i).unwrap();
        classify_holes(&mut w, scene.proxy_depth(&tgt, &i).as_ref());
        // occluder front face at z=-0.5, wall front face at z=0.6
        let (z_front, z_back) = (2.5, 3.6);
        let band = i.f * dx * (1.0 / z_front - 1.0 / z_back);
        // the camera moves +x, so the wall behind the occluder's right edge is revealed
        let y = i.height / 2;
        let right_edge = i.cx + i.f * (0.25 - dx) / z_front;
        let lo = right_edge.floor() as usize - 2;
        let hi = (right_edge + band).ceil() as usize + 3;
        let holes = (lo..hi).filter(|&x| w.hole_kind[x + y * i.width] == HoleKind::Disoccluded).count();
        assert!((holes as f64 - band).abs() <= 1.0, "band {holes} px, analytic {band:.2}");
    }

    #[test]
    fn phi_demotes_the_angle_tail() {
        let scene = wall_scene(24);
        let i = intr(40, 40.0);
        let pose = cam(Vec3::new(0.0, 0.0, -3.0));
        let r = render_frame(&pose, &i, &scene, &cfg()).unwrap();
        let tgt = cam(Vec3::new(0.25, 0.1, -2.9));
        let base = warp(&r, &tgt, &i).unwrap();
        let phi = 4f64.to_radians();
        let valid: Vec<f64> = (0..base.valid.len()).filter(|&k| base.valid[k]).map(|k| base.angles[k]).collect();
        let tail = valid.iter().filter(|&&a| a >= phi).count();
        assert!(tail > 0 && tail < valid.len());
        let mut w = base.clone();
        assert_eq!(apply_phi(&mut w, phi), tail);
        let mut none = base.clone();
        assert_eq!(apply_phi(&mut none, f64::INFINITY), 0);
        assert_eq!((none.hole_kind, none.color), (base.hole_kind.clone(), base.color.clone()));
        let mut last = 0;
        for deg in [8.0, 6.0, 4.0, 2.0, 1.0, 0.0] {
            let mut w = base.clone();
            let d = apply_phi(&mut w, f64::to_radians(deg));
            assert!(d >= last);
            last = d;
        }
        assert_eq!(last, valid.len());
    }

    #[test]
    fn phi_zero_equals_full_render() {
        let scene = wall_scene(24);
        let i = intr(32, 40.0);
        let c = cfg();
        let pose = cam(Vec3::new(0.0, 0.0, -3.0));
        let r = render_frame(&pose, &i, &scene, &c).unwrap();
        let tgt = cam(Vec3::new(0.05, 0.0, -3.0));
        let wcfg = WarpConfig { phi: 0.0, ..WarpConfig::default() };
        let t = render_target(&r, &tgt, &i, &scene, &c, &wcfg).unwrap();
        assert_eq!(t.frame, render_frame(&tgt, &i, &scene, &c).unwrap());
    }

    #[test]
    fn extrapolation_examples() {
        let w4 = WarpConfig { window: 4, ..WarpConfig::default() };
        let p = cam(Vec3::new(0.3, 0.2, -1.0));
        let r = extrapolate_reference_pose(&p, &p, &w4);
        assert!((r.translation - p.translation).norm() < 1e-12);
        assert!((r.rotation - p.rotation).norm() < 1e-12);
        let a = Pose::from_translation(Vec3::zeros());
        let b = Pose::from_translation(Vec3::new(1.0, 0.0, 0.0));
        let r = extrapolate_reference_pose(&a, &b, &w4);
        assert!((r.translation - Vec3::new(3.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn extrapolation_lands_on_constant_velocity_trajectory() {
        let omega = Vec3::new(0.01, -0.02, 0.015);
        let v = Vec3::new(0.05, -0.01, 0.02);
        let r0 = Rotation3::from_euler_angles(0.3, -0.2, 0.9);
        let at = |k: f64| Pose::from_rotation(Rotation3::from_scaled_axis(omega * k) * r0, Vec3::new(1.0, 2.0, 3.0) + v * k);
        for window in [1, 4, 6, 16, 26] {
            let w = WarpConfig { window, frame_interval: 0.05, ..WarpConfig::default() };
            let k = 7.0;
            let r = extrapolate_reference_pose(&at(k - 1.0), &at(k), &w);
            let want = at(k + window as f64 / 2.0);
            assert!((r.translation - want.translation).norm() < 1e-6);
            assert!((r.rotation - want.rotation).norm() < 1e-6);
        }
    }

    #[test]
    fn schedule_arithmetic() {
        let spans = reference_spans(33, 16);
        assert_eq!(spans, vec![0..2, 2..18, 18..33]);
        let ones = reference_spans(5, 1);
        assert_eq!(ones, vec![0..2, 2..3, 3..4, 4..5]);
        for (n, w) in [(2, 1), (10, 3), (33, 16), (40, 26)] {
            let spans = reference_spans(n, w);
            let covered: Vec<usize> = spans.iter().flat_map(|s| s.clone()).collect();
            assert_eq!(covered, (0..n).collect::<Vec<_>>());
            assert!(spans.iter().skip(1).all(|s| s.len() <= w));
        }
    }

    #[test]
    fn sequence_ledger_and_schedule() {
        let scene = wall_scene(16);
        let i = intr(16, 40.0);
        let c = RenderConfig { samples: 48, ..cfg() };
        let traj: Vec<Pose> = (0..7).map(|k| cam(Vec3::new(0.02 * k as f64, 0.0, -3.0))).collect();
        let gt: Vec<Frame> = traj.iter().map(|p| render_frame(p, &i, &scene, &c).unwrap()).collect();
        let wcfg = WarpConfig { window: 2, ..WarpConfig::default() };
        let out = run_sequence(&traj, &i, &scene, &c, &wcfg, Some(&gt)).unwrap();
        assert_eq!(out.frames.len(), 7);
        assert_eq!(out.references.len(), 4);
        assert_eq!(out.frames[0], gt[0]);
        let mut seen_refs = Vec::new();
        for e in &out.schedule {
            match e.kind {
                FrameKind::Reference => seen_refs.push(e.reference),
                FrameKind::Target => assert!(seen_refs.contains(&e.reference)),
                FrameKind::Downsampled => unreachable!(),
            }
        }
        for r in out.ledger.iter().filter(|r| r.kind != FrameKind::Reference) {
            assert_eq!(r.warped_px + r.sparse_px + r.void_px, i.pixel_count());
            assert!(r.psnr_vs_full.unwrap() > 20.0);
        }
        let csv = ledger_csv(&out.ledger);
        assert!(csv.starts_with("frame,kind,warped_px,sparse_px,void_px,psnr_vs_full"));
        assert_eq!(csv.lines().count(), 1 + out.ledger.len());
        assert!(run_sequence(&traj[..1], &i, &scene, &c, &wcfg, None).is_err());
    }

    #[test]
    fn degenerate_cloud_warps_to_nothing() {
        let i = intr(8, 40.0);
        let f = Frame::blank(Pose::identity(), i, [0.0; 3]);
        let w = warp(&f, &Pose::identity(), &i).unwrap();
        assert_eq!(w.count(HoleKind::Void), 64);
        assert!(PointCloud::default().is_empty());
    }
}
