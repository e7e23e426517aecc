//! Pixel-centric rendering: sample → gather → decode → composite for every
//! ray, in sample-index order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{pixel_ray, CameraIntrinsics, Pose, Ray, Vec3};
use crate::image::{DepthMap, Image, Rgb};
use crate::scene::{CellCoord, FeatureGrid, MlpWeights, Scene};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub samples: usize,
    pub near: f64,
    pub far: f64,
    pub background: Rgb,
    /// Opacity below which a pixel's depth is +∞.
    pub tau: f32,
    /// Transmittance below which a ray stops accumulating.
    pub termination: f32,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig { samples: 128, near: 0.02, far: 2.6, background: [0.0; 3], tau: 0.5, termination: 1e-4 }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        validate_range(self.near, self.far, self.samples)?;
        if !(0.0..=1.0).contains(&self.tau) || !(0.0..1.0).contains(&self.termination) {
            return Err(Error::config("tau or termination threshold out of range"));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        (self.far - self.near) / self.samples as f64
    }
}

fn validate_range(near: f64, far: f64, n: usize) -> Result<()> {
    if !(near >= 0.0 && far > near && far.is_finite()) {
        return Err(Error::input(format!("invalid sampling range [{near}, {far}]")));
    }
    if n < 2 {
        return Err(Error::input(format!("need at least 2 samples per ray, got {n}")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RaySample {
    pub ray_id: u32,
    pub sample_index: u32,
    pub position: Vec3,
    pub t: f64,
    pub delta: f64,
    /// Outside the grid's bounding box; never gathered or composited.
    pub skipped: bool,
}

/// Distance and segment length of sample `i` of `n` over `[near, far]`.
#[inline]
pub fn sample_t(near: f64, far: f64, n: usize, i: usize) -> (f64, f64) {
    let delta = (far - near) / n as f64;
    (near + (i as f64 + 0.5) * delta, delta)
}

/// Uniform midpoint samples; those outside `grid`'s box are flagged.
pub fn sample_ray(ray: &Ray, ray_id: u32, near: f64, far: f64, n: usize, grid: &FeatureGrid) -> Result<Vec<RaySample>> {
    validate_range(near, far, n)?;
    Ok((0..n)
        .map(|i| {
            let (t, delta) = sample_t(near, far, n, i);
            let position = ray.at(t);
            RaySample { ray_id, sample_index: i as u32, position, t, delta, skipped: !grid.contains(&position) }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleResult {
    pub sigma: f32,
    pub rgb: Rgb,
}

/// Trilinear feature at `position`, or `None` outside the grid box.
pub fn gather_features(position: &Vec3, grid: &FeatureGrid) -> Option<Vec<f32>> {
    if !grid.contains(position) {
        return None;
    }
    let mut out = vec![0.0; grid.channels()];
    grid.gather_into(&grid.voxel_id(position), &mut out);
    Some(out)
}

#[inline]
pub fn softplus(x: f32) -> f32 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// Two-layer MLP decode; `hidden` is scratch of any length.
pub fn decode_with(feature: &[f32], mlp: &MlpWeights, hidden: &mut Vec<f32>) -> SampleResult {
    let c = mlp.input;
    hidden.clear();
    hidden.extend((0..mlp.hidden).map(|h| {
        let row = &mlp.w1[h * c..(h + 1) * c];
        let acc = row.iter().zip(feature).fold(mlp.b1[h], |acc, (w, f)| acc + w * f);
        acc.max(0.0)
    }));
    let mut out = [0.0f32; 4];
    for (o, v) in out.iter_mut().enumerate() {
        let row = &mlp.w2[o * mlp.hidden..(o + 1) * mlp.hidden];
        *v = row.iter().zip(hidden.iter()).fold(mlp.b2[o], |acc, (w, x)| acc + w * x);
    }
    SampleResult { sigma: softplus(out[0]), rgb: [sigmoid(out[1]), sigmoid(out[2]), sigmoid(out[3])] }
}

pub fn decode(feature: &[f32], mlp: &MlpWeights) -> SampleResult {
    decode_with(feature, mlp, &mut Vec::new())
}

/// Front-to-back accumulator. Samples pushed after termination are ignored.
#[derive(Clone, Copy, Debug)]
pub struct Compositor {
    termination: f32,
    transmittance: f32,
    rgb: Rgb,
    opacity: f32,
    weighted_t: f64,
    done: bool,
}

impl Compositor {
    pub fn new(termination: f32) -> Self {
        Compositor { termination, transmittance: 1.0, rgb: [0.0; 3], opacity: 0.0, weighted_t: 0.0, done: false }
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn opacity(&self) -> f32 {
        self.opacity
    }

    pub fn push(&mut self, r: &SampleResult, t: f64, delta: f64) {
        if self.done {
            return;
        }
        let alpha = 1.0 - (-r.sigma * delta as f32).exp();
        let w = self.transmittance * alpha;
        for k in 0..3 {
            self.rgb[k] += w * r.rgb[k];
        }
        self.opacity += w;
        self.weighted_t += w as f64 * t;
        self.transmittance *= 1.0 - alpha;
        if self.transmittance < self.termination {
            self.done = true;
        }
    }

    /// `(rgb, expected distance, opacity)`; distance +∞ below `tau`.
    pub fn finish(&self, tau: f32) -> (Rgb, f64, f32) {
        let t = if self.opacity >= tau && self.opacity > 0.0 { self.weighted_t / self.opacity as f64 } else { f64::INFINITY };
        (self.rgb, t, self.opacity)
    }
}

/// Sample results plus their `(t, delta)` in front-to-back order.
pub fn composite(results: &[(SampleResult, f64, f64)], termination: f32, tau: f32) -> (Rgb, f64, f32) {
    let mut c = Compositor::new(termination);
    for (r, t, d) in results {
        c.push(r, *t, *d);
    }
    c.finish(tau)
}

/// A rendered view. `depth` is camera-space Z.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub color: Image,
    pub depth: DepthMap,
    pub opacity: Vec<f32>,
    pub pose: Pose,
    pub intr: CameraIntrinsics,
}

impl Frame {
    pub fn blank(pose: Pose, intr: CameraIntrinsics, background: Rgb) -> Self {
        Frame {
            color: Image::new(intr.width, intr.height, background),
            depth: DepthMap::new(intr.width, intr.height, f32::INFINITY),
            opacity: vec![0.0; intr.pixel_count()],
            pose,
            intr,
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.intr.pixel_count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelValue {
    pub color: Rgb,
    /// Camera-space Z, +∞ when opacity < tau.
    pub depth: f32,
    pub opacity: f32,
}

/// Finishes a ray: background blend and distance-to-Z conversion.
pub fn pixel_value(comp: &Compositor, cam_z: f64, cfg: &RenderConfig) -> PixelValue {
    let (rgb, t, opacity) = comp.finish(cfg.tau);
    let bg = cfg.background;
    let keep = 1.0 - opacity;
    let color = [rgb[0] + keep * bg[0], rgb[1] + keep * bg[1], rgb[2] + keep * bg[2]];
    let depth = if t.is_finite() { (t * cam_z) as f32 } else { f32::INFINITY };
    PixelValue { color, depth, opacity }
}

/// Camera-space Z component of the unit ray through pixel `(x, y)`.
pub fn pixel_cam_z(intr: &CameraIntrinsics, x: usize, y: usize) -> f64 {
    let d = intr.camera_direction(intr.pixel_center(x, y));
    1.0 / d.norm()
}

/// Per-worker scratch buffers.
#[derive(Default)]
pub struct Scratch {
    feature: Vec<f32>,
    hidden: Vec<f32>,
}

/// Pixel-centric evaluation of one ray. Returns the compositor and the
/// number of samples gathered.
pub fn march_ray(ray: &Ray, scene: &Scene, cfg: &RenderConfig, scratch: &mut Scratch) -> (Compositor, usize) {
    march_ray_observed(ray, scene, cfg, scratch, |_| {})
}

/// [`march_ray`] that reports the location of every gathered sample.
pub fn march_ray_observed(
    ray: &Ray,
    scene: &Scene,
    cfg: &RenderConfig,
    scratch: &mut Scratch,
    mut observe: impl FnMut(&CellCoord),
) -> (Compositor, usize) {
    let grid = &scene.grid;
    scratch.feature.resize(grid.channels(), 0.0);
    let mut comp = Compositor::new(cfg.termination);
    let mut issued = 0;
    for i in 0..cfg.samples {
        let (t, delta) = sample_t(cfg.near, cfg.far, cfg.samples, i);
        let p = ray.at(t);
        if !grid.contains(&p) {
            continue;
        }
        let loc = grid.voxel_id(&p);
        observe(&loc);
        grid.gather_into(&loc, &mut scratch.feature);
        let r = decode_with(&scratch.feature, &scene.mlp, &mut scratch.hidden);
        issued += 1;
        comp.push(&r, t, delta);
        if comp.is_done() {
            break;
        }
    }
    (comp, issued)
}

pub fn render_pixel(
    pose: &Pose,
    intr: &CameraIntrinsics,
    scene: &Scene,
    cfg: &RenderConfig,
    x: usize,
    y: usize,
    scratch: &mut Scratch,
) -> (PixelValue, usize) {
    let ray = pixel_ray(intr, pose, x, y);
    let (comp, issued) = march_ray(&ray, scene, cfg, scratch);
    (pixel_value(&comp, pixel_cam_z(intr, x, y), cfg), issued)
}

pub fn render_frame(pose: &Pose, intr: &CameraIntrinsics, scene: &Scene, cfg: &RenderConfig) -> Result<Frame> {
    cfg.validate()?;
    let w = intr.width;
    let rows: Vec<Vec<PixelValue>> = (0..intr.height)
        .into_par_iter()
        .map_init(Scratch::default, |scratch, y| (0..w).map(|x| render_pixel(pose, intr, scene, cfg, x, y, scratch).0).collect())
        .collect();
    let mut frame = Frame::blank(*pose, *intr, cfg.background);
    for (y, row) in rows.into_iter().enumerate() {
        for (x, px) in row.into_iter().enumerate() {
            write_pixel(&mut frame, x + y * w, &px);
        }
    }
    Ok(frame)
}

pub fn write_pixel(frame: &mut Frame, idx: usize, px: &PixelValue) {
    frame.color.data[idx] = px.color;
    frame.depth.data[idx] = px.depth;
    frame.opacity[idx] = px.opacity;
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparseRender {
    /// `(linear pixel index, value)` in ascending pixel order.
    pub pixels: Vec<(usize, PixelValue)>,
    pub samples_issued: usize,
}

impl SparseRender {
    pub fn pixel_count(&self) -> usize {
        self.pixels.len()
    }

    pub fn apply(&self, frame: &mut Frame) {
        for (idx, px) in &self.pixels {
            write_pixel(frame, *idx, px);
        }
    }
}

/// Renders only the pixels whose `mask` entry is set (row-major).
pub fn render_sparse(pose: &Pose, intr: &CameraIntrinsics, scene: &Scene, cfg: &RenderConfig, mask: &[bool]) -> Result<SparseRender> {
    cfg.validate()?;
    if mask.len() != intr.pixel_count() {
        return Err(Error::input("mask size does not match the image"));
    }
    let idx: Vec<usize> = mask.iter().enumerate().filter_map(|(i, &m)| m.then_some(i)).collect();
    let w = intr.width;
    let out: Vec<(usize, (PixelValue, usize))> =
        idx.par_iter().map_init(Scratch::default, |scratch, &i| (i, render_pixel(pose, intr, scene, cfg, i % w, i / w, scratch))).collect();
    let samples_issued = out.iter().map(|(_, (_, n))| n).sum();
    Ok(SparseRender { pixels: out.into_iter().map(|(i, (p, _))| (i, p)).collect(), samples_issued })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{corner_offset, trilinear_weights, Aabb};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(n: usize, c: usize, seed: u64) -> FeatureGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vals = (0..n * n * n * c).map(|_| rng.random_range(-4.0f32..4.0)).collect();
        FeatureGrid::new([n; 3], Aabb::cube(1.0), c, vals).unwrap()
    }

    #[test]
    fn sample_positions_match_arithmetic() {
        let g = random_grid(3, 4, 0);
        let ray = Ray { origin: Vec3::new(0.0, 0.0, -0.5), direction: Vec3::new(0.0, 0.0, 1.0) };
        let s = sample_ray(&ray, 0, 0.0, 1.0, 4, &g).unwrap();
        let ts: Vec<f64> = s.iter().map(|s| s.t).collect();
        assert_eq!(ts, vec![0.125, 0.375, 0.625, 0.875]);
        assert!(s.iter().all(|s| s.delta == 0.25));
        let two = sample_ray(&ray, 0, 0.0, 1.0, 2, &g).unwrap();
        assert_eq!(two.len(), 2);
        assert_eq!(two[0].delta, two[1].delta);
        for s in &s {
            assert!((s.position - ray.at(s.t)).norm() < 1e-6);
        }
        assert!(sample_ray(&ray, 0, 1.0, 1.0, 4, &g).is_err());
        assert!(sample_ray(&ray, 0, 0.0, 1.0, 1, &g).is_err());
        assert!(sample_ray(&ray, 0, -1.0, 1.0, 4, &g).is_err());
    }

    #[test]
    fn out_of_box_samples_are_flagged() {
        let g = random_grid(3, 4, 0);
        let ray = Ray { origin: Vec3::new(0.0, 0.0, -3.0), direction: Vec3::new(0.0, 0.0, 1.0) };
        let s = sample_ray(&ray, 7, 0.0, 6.0, 6, &g).unwrap();
        let skipped: Vec<bool> = s.iter().map(|s| s.skipped).collect();
        assert_eq!(skipped, vec![true, true, false, false, true, true]);
        assert!(gather_features(&s[0].position, &g).is_none());
    }

    #[test]
    fn constant_grid_gathers_exactly() {
        let c = [0.3f32, -1.7, 2.5, 0.01, 9.0];
        let g = FeatureGrid::constant([5; 3], Aabb::cube(1.0), &c).unwrap();
        let q: Vec<f32> = c.iter().map(|v| crate::scene::quantize(*v)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..500 {
            let p = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            assert_eq!(gather_features(&p, &g).unwrap(), q);
        }
    }

    #[test]
    fn vertex_sample_returns_vertex_feature() {
        let g = random_grid(5, 4, 1);
        for id in [0, 7, 31, 62, 124] {
            let gc = g.vertex_coords(id);
            let f = gather_features(&g.vertex_position(gc), &g).unwrap();
            assert_eq!(f, g.vertex_features(id));
        }
    }

    #[test]
    fn gather_matches_weighted_sum_oracle() {
        let g = random_grid(6, 8, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let p = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let got = gather_features(&p, &g).unwrap();
            // independent oracle: cell and weights from scratch, 8-term dot product in f64
            let h = 2.0 / 5.0;
            let u: Vec<f64> = (0..3).map(|a| (p[a] + 1.0) / h).collect();
            let cell: Vec<usize> = u.iter().map(|v| (v.floor() as usize).min(4)).collect();
            let fr: Vec<f64> = (0..3).map(|a| u[a] - cell[a] as f64).collect();
            for ch in 0..8 {
                let mut want = 0.0f64;
                for k in 0..8 {
                    let o = corner_offset(k);
                    let w: f64 = (0..3).map(|a| if o[a] == 1 { fr[a] } else { 1.0 - fr[a] }).product();
                    let id = (cell[0] + o[0]) + 6 * ((cell[1] + o[1]) + 6 * (cell[2] + o[2]));
                    want += w * g.vertex_features(id)[ch] as f64;
                }
                assert!((got[ch] as f64 - want).abs() < 1e-5 * want.abs().max(1.0), "{} vs {want}", got[ch]);
            }
            // and against the f32 weights used by the RIT record
            let loc = g.voxel_id(&p);
            let w = trilinear_weights(loc.frac_f32());
            let ids = g.cell_vertices(loc.cell);
            let dot: f32 = (0..8).map(|k| w[k] * g.vertex_features(ids[k] as usize)[0]).sum();
            assert!((dot - got[0]).abs() < 1e-5 * got[0].abs().max(1.0));
        }
    }

    #[test]
    fn decode_closed_forms() {
        let id = MlpWeights::identity(4);
        let r = decode(&[-40.0, 0.0, 0.0, 0.0], &id);
        assert!(r.sigma < 1e-15);
        let r = decode(&[0.7, 1.0, -2.0, 3.0], &id);
        assert_eq!(r.sigma, softplus(0.7));
        assert_eq!(r.rgb, [sigmoid(1.0), sigmoid(-2.0), sigmoid(3.0)]);
        let z = MlpWeights::zeros(6, 3);
        let r = decode(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &z);
        assert!((r.sigma - std::f32::consts::LN_2).abs() < 1e-7);
        assert_eq!(r.rgb, [0.5; 3]);
    }

    #[test]
    fn decode_matches_matrix_oracle() {
        let m = MlpWeights::random(8, 6, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let f: Vec<f32> = (0..8).map(|_| rng.random_range(-3.0f32..3.0)).collect();
            let got = decode(&f, &m);
            let mut hidden = [0.0f64; 6];
            for (h, hv) in hidden.iter_mut().enumerate() {
                let s: f64 = (0..8).map(|c| m.w1[h * 8 + c] as f64 * f[c] as f64).sum::<f64>() + m.b1[h] as f64;
                *hv = s.max(0.0);
            }
            let out: Vec<f64> = (0..4).map(|o| (0..6).map(|h| m.w2[o * 6 + h] as f64 * hidden[h]).sum::<f64>() + m.b2[o] as f64).collect();
            let sigma = (1.0 + out[0].exp()).ln();
            assert!((got.sigma as f64 - sigma).abs() < 1e-5);
            for k in 0..3 {
                assert!((got.rgb[k] as f64 - 1.0 / (1.0 + (-out[k + 1]).exp())).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn composite_closed_forms() {
        let empty = vec![(SampleResult { sigma: 0.0, rgb: [1.0; 3] }, 1.0, 0.1); 5];
        let (rgb, t, op) = composite(&empty, 1e-4, 0.5);
        assert_eq!((rgb, op), ([0.0; 3], 0.0));
        assert!(t.is_infinite());
        let hit = vec![
            (SampleResult { sigma: f32::INFINITY, rgb: [0.2, 0.4, 0.6] }, 2.0, 0.1),
            (SampleResult { sigma: 5.0, rgb: [1.0; 3] }, 2.1, 0.1),
        ];
        let (rgb, t, op) = composite(&hit, 1e-4, 0.5);
        assert_eq!(rgb, [0.2, 0.4, 0.6]);
        assert_eq!(t, 2.0);
        assert_eq!(op, 1.0);
    }

    #[test]
    fn composite_matches_direct_sum_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let s: Vec<(SampleResult, f64, f64)> = (0..8)
                .map(|i| {
                    let r = SampleResult { sigma: rng.random_range(0.0f32..3.0), rgb: [rng.random(), rng.random(), rng.random()] };
                    (r, 1.0 + 0.1 * i as f64, 0.1)
                })
                .collect();
            let (rgb, t, op) = composite(&s, 1e-4, 0.0);
            // reference: closed-form product transmittance, no early stop
            let (mut wsum, mut c, mut tn) = (0.0f64, [0.0f64; 3], 0.0f64);
            for i in 0..8 {
                let trans: f64 = (0..i).map(|j| (-(s[j].0.sigma as f64) * s[j].2).exp()).product();
                let a = 1.0 - (-(s[i].0.sigma as f64) * s[i].2).exp();
                let w = trans * a;
                wsum += w;
                tn += w * s[i].1;
                for k in 0..3 {
                    c[k] += w * s[i].0.rgb[k] as f64;
                }
            }
            assert!((op as f64 - wsum).abs() < 1e-4);
            for k in 0..3 {
                assert!((rgb[k] as f64 - c[k]).abs() < 1e-4);
            }
            if wsum > 0.0 {
                assert!((t - tn / wsum).abs() < 1e-4);
            }
        }
    }

    proptest! {
        #[test]
        fn opacity_is_monotone(sig in prop::collection::vec(0.0f32..20.0, 1..40)) {
            let mut c = Compositor::new(1e-4);
            let mut last = 0.0;
            for (i, s) in sig.iter().enumerate() {
                c.push(&SampleResult { sigma: *s, rgb: [0.5; 3] }, i as f64, 0.05);
                prop_assert!(c.opacity() >= last);
                prop_assert!(c.opacity() <= 1.0 + 1e-5);
                last = c.opacity();
            }
        }
    }
}
