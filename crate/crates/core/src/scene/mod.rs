//! Dense vertex-feature grid, the decoding MLP, and their partitioning into
//! MVoxels.

mod io;
mod mvoxel;
mod synth;

pub use io::{load_scene, load_scene_bytes, save_scene, scene_bytes};
pub use mvoxel::{MVoxelGrid, DEFAULT_BLOCK, MIN_BLOCK};
pub use synth::{build_synthetic_scene, AnalyticScene, MlpKind, Primitive, PrimitiveShape, SceneSpec};

use half::f16;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pose, Ray, Vec3};
use crate::image::DepthMap;

/// Bytes per stored feature value (fp16 at rest).
pub const FEATURE_BYTES: usize = 2;
/// MLP outputs: density logit then RGB logits.
pub const MLP_OUTPUTS: usize = 4;

/// Rounds through fp16 so the value is exactly what storage would hold.
pub fn quantize(v: f32) -> f32 {
    f16::from_f32(v).to_f32()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn cube(half: f64) -> Self {
        Aabb { min: [-half; 3], max: [half; 3] }
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn center(&self) -> Vec3 {
        Vec3::new(0.5 * (self.min[0] + self.max[0]), 0.5 * (self.min[1] + self.max[1]), 0.5 * (self.min[2] + self.max[2]))
    }

    /// Entry/exit distances of the ray through the box.
    pub fn intersect(&self, ray: &Ray) -> Option<(f64, f64)> {
        let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
        for a in 0..3 {
            let inv = 1.0 / ray.direction[a];
            let mut lo = (self.min[a] - ray.origin[a]) * inv;
            let mut hi = (self.max[a] - ray.origin[a]) * inv;
            if lo > hi {
                std::mem::swap(&mut lo, &mut hi);
            }
            if lo.is_nan() || hi.is_nan() {
                // ray parallel to the slab and on its boundary plane
                if ray.origin[a] < self.min[a] || ray.origin[a] > self.max[a] {
                    return None;
                }
                continue;
            }
            t0 = t0.max(lo);
            t1 = t1.min(hi);
        }
        (t0 <= t1 && t1 >= 0.0).then_some((t0, t1))
    }
}

/// Cell index plus the position's fractional coordinates inside that cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellCoord {
    pub cell: [usize; 3],
    pub frac: [f64; 3],
}

impl CellCoord {
    pub fn frac_f32(&self) -> [f32; 3] {
        [self.frac[0] as f32, self.frac[1] as f32, self.frac[2] as f32]
    }
}

/// Trilinear corner order: corner `k` is offset `(k & 1, (k >> 1) & 1, k >> 2)`.
pub fn corner_offset(k: usize) -> [usize; 3] {
    [k & 1, (k >> 1) & 1, k >> 2]
}

/// The eight trilinear weights, in corner order.
pub fn trilinear_weights(frac: [f32; 3]) -> [f32; 8] {
    let mut w = [0.0; 8];
    for (k, wk) in w.iter_mut().enumerate() {
        let o = corner_offset(k);
        *wk = (0..3).map(|a| if o[a] == 1 { frac[a] } else { 1.0 - frac[a] }).product();
    }
    w
}

/// Linear interpolation that is exact at both endpoints and for `a == b`.
#[inline]
fn lerp(a: f32, b: f32, t: f32) -> f32 {
    if t < 0.5 {
        a + t * (b - a)
    } else {
        b + (1.0 - t) * (a - b)
    }
}

/// Nested-lerp trilinear interpolation of the eight corner feature vectors
/// (corner order as in [`corner_offset`]).
pub fn trilinear_into(frac: [f32; 3], corners: [&[f32]; 8], out: &mut [f32]) {
    let [fx, fy, fz] = frac;
    for (c, o) in out.iter_mut().enumerate() {
        let x00 = lerp(corners[0][c], corners[1][c], fx);
        let x10 = lerp(corners[2][c], corners[3][c], fx);
        let x01 = lerp(corners[4][c], corners[5][c], fx);
        let x11 = lerp(corners[6][c], corners[7][c], fx);
        let y0 = lerp(x00, x10, fy);
        let y1 = lerp(x01, x11, fy);
        *o = lerp(y0, y1, fz);
    }
}

/// Dense grid of per-vertex feature vectors, vertex-major
/// (`features[v * channels + c]`), values fp16-representable.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureGrid {
    dims: [usize; 3],
    bbox: Aabb,
    channels: usize,
    features: Vec<f32>,
}

impl FeatureGrid {
    pub fn new(dims: [usize; 3], bbox: Aabb, channels: usize, mut features: Vec<f32>) -> Result<Self> {
        if dims.iter().any(|&n| n < 2) {
            return Err(Error::input(format!("grid needs at least 2 vertices per axis, got {dims:?}")));
        }
        if channels < MLP_OUTPUTS {
            return Err(Error::input(format!("grid needs at least {MLP_OUTPUTS} channels, got {channels}")));
        }
        if (0..3).any(|a| !(bbox.max[a] > bbox.min[a])) {
            return Err(Error::input("bounding box is empty"));
        }
        let expected = dims[0] * dims[1] * dims[2] * channels;
        if features.len() != expected {
            return Err(Error::input(format!("expected {expected} feature values, got {}", features.len())));
        }
        for v in features.iter_mut() {
            *v = quantize(*v);
        }
        Ok(FeatureGrid { dims, bbox, channels, features })
    }

    /// Grid whose every vertex carries `value`.
    pub fn constant(dims: [usize; 3], bbox: Aabb, value: &[f32]) -> Result<Self> {
        let n = dims.iter().product::<usize>();
        let features = (0..n).flat_map(|_| value.iter().copied()).collect();
        Self::new(dims, bbox, value.len(), features)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn bbox(&self) -> &Aabb {
        &self.bbox
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn vertex_count(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn byte_size(&self) -> usize {
        self.features.len() * FEATURE_BYTES
    }

    pub fn cell_size(&self) -> [f64; 3] {
        let mut h = [0.0; 3];
        for (a, ha) in h.iter_mut().enumerate() {
            *ha = (self.bbox.max[a] - self.bbox.min[a]) / (self.dims[a] - 1) as f64;
        }
        h
    }

    pub fn vertex_id(&self, g: [usize; 3]) -> usize {
        g[0] + self.dims[0] * (g[1] + self.dims[1] * g[2])
    }

    pub fn vertex_coords(&self, id: usize) -> [usize; 3] {
        let x = id % self.dims[0];
        let y = (id / self.dims[0]) % self.dims[1];
        [x, y, id / (self.dims[0] * self.dims[1])]
    }

    pub fn vertex_position(&self, g: [usize; 3]) -> Vec3 {
        let h = self.cell_size();
        Vec3::new(self.bbox.min[0] + g[0] as f64 * h[0], self.bbox.min[1] + g[1] as f64 * h[1], self.bbox.min[2] + g[2] as f64 * h[2])
    }

    pub fn vertex_features(&self, id: usize) -> &[f32] {
        &self.features[id * self.channels..(id + 1) * self.channels]
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        self.bbox.contains(p)
    }

    /// Locates `p`: floor-based cell index clamped to `[0, N-2]`. A point on
    /// a shared face belongs to the cell that starts there; the top face
    /// belongs to the last cell.
    pub fn voxel_id(&self, p: &Vec3) -> CellCoord {
        let h = self.cell_size();
        let mut cell = [0; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let u = ((p[a] - self.bbox.min[a]) / h[a]).max(0.0);
            let c = (u.floor() as usize).min(self.dims[a] - 2);
            cell[a] = c;
            frac[a] = (u - c as f64).clamp(0.0, 1.0);
        }
        CellCoord { cell, frac }
    }

    pub fn cell_linear_id(&self, cell: [usize; 3]) -> usize {
        cell[0] + (self.dims[0] - 1) * (cell[1] + (self.dims[1] - 1) * cell[2])
    }

    /// Vertex ids of the cell's corners in corner order.
    pub fn cell_vertices(&self, cell: [usize; 3]) -> [u32; 8] {
        let mut ids = [0u32; 8];
        for (k, id) in ids.iter_mut().enumerate() {
            let o = corner_offset(k);
            *id = self.vertex_id([cell[0] + o[0], cell[1] + o[1], cell[2] + o[2]]) as u32;
        }
        ids
    }

    /// Trilinearly interpolated feature vector at a located position.
    pub fn gather_into(&self, loc: &CellCoord, out: &mut [f32]) {
        let ids = self.cell_vertices(loc.cell);
        let corners = ids.map(|id| self.vertex_features(id as usize));
        trilinear_into(loc.frac_f32(), corners, out);
    }
}

/// Two dense layers, `C → H` (ReLU) and `H → 4`; weights row-major
/// (`w1[h * C + c]`, `w2[o * H + h]`), values fp16-representable.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpWeights {
    pub input: usize,
    pub hidden: usize,
    pub w1: Vec<f32>,
    pub b1: Vec<f32>,
    pub w2: Vec<f32>,
    pub b2: Vec<f32>,
}

impl MlpWeights {
    pub fn new(input: usize, hidden: usize, w1: Vec<f32>, b1: Vec<f32>, w2: Vec<f32>, b2: Vec<f32>) -> Result<Self> {
        if w1.len() != input * hidden || b1.len() != hidden || w2.len() != MLP_OUTPUTS * hidden || b2.len() != MLP_OUTPUTS {
            return Err(Error::input("MLP weight shapes do not match the declared dimensions"));
        }
        let q = |v: Vec<f32>| v.into_iter().map(quantize).collect::<Vec<_>>();
        Ok(MlpWeights { input, hidden, w1: q(w1), b1: q(b1), w2: q(w2), b2: q(b2) })
    }

    /// Decodes to `(softplus(F[0]), sigmoid(F[1..4]))` exactly: each
    /// pass-through value is split into its positive and negative ReLU parts.
    pub fn identity(input: usize) -> Self {
        let hidden = 2 * MLP_OUTPUTS;
        let mut w1 = vec![0.0; hidden * input];
        let mut w2 = vec![0.0; MLP_OUTPUTS * hidden];
        for i in 0..MLP_OUTPUTS {
            w1[(2 * i) * input + i] = 1.0;
            w1[(2 * i + 1) * input + i] = -1.0;
            w2[i * hidden + 2 * i] = 1.0;
            w2[i * hidden + 2 * i + 1] = -1.0;
        }
        MlpWeights { input, hidden, w1, b1: vec![0.0; hidden], w2, b2: vec![0.0; MLP_OUTPUTS] }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        MlpWeights {
            input,
            hidden,
            w1: vec![0.0; input * hidden],
            b1: vec![0.0; hidden],
            w2: vec![0.0; MLP_OUTPUTS * hidden],
            b2: vec![0.0; MLP_OUTPUTS],
        }
    }

    pub fn random(input: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s1 = 1.0 / (input as f32).sqrt();
        let s2 = 1.0 / (hidden as f32).sqrt();
        let mut draw = |n: usize, s: f32| (0..n).map(|_| quantize(rng.random_range(-s..s))).collect::<Vec<_>>();
        let w1 = draw(input * hidden, s1);
        let b1 = draw(hidden, 0.1);
        let w2 = draw(MLP_OUTPUTS * hidden, s2);
        let b2 = draw(MLP_OUTPUTS, 0.1);
        MlpWeights { input, hidden, w1, b1, w2, b2 }
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// `(inputs, outputs)` of each dense layer.
    pub fn layer_shapes(&self) -> [(usize, usize); 2] {
        [(self.input, self.hidden), (self.hidden, MLP_OUTPUTS)]
    }
}

/// A renderable scene: the feature grid, its decoder, and (for synthetic
/// scenes) the analytic geometry it was rasterized from.
#[derive(Clone, Debug)]
pub struct Scene {
    pub grid: FeatureGrid,
    pub mlp: MlpWeights,
    pub analytic: Option<AnalyticScene>,
}

impl Scene {
    pub fn new(grid: FeatureGrid, mlp: MlpWeights) -> Result<Self> {
        if mlp.input != grid.channels() {
            return Err(Error::input(format!("MLP expects {} inputs but the grid has {} channels", mlp.input, grid.channels())));
        }
        Ok(Scene { grid, mlp, analytic: None })
    }

    /// Conservative geometry depth for a view, available when the scene
    /// carries analytic geometry and its decoder maps the clamped empty-space
    /// logit to zero density. Where it is +∞ a render is exactly background.
    pub fn proxy_depth(&self, pose: &Pose, intr: &CameraIntrinsics) -> Option<DepthMap> {
        let analytic = self.analytic.as_ref()?;
        if self.mlp != MlpWeights::identity(self.grid.channels()) {
            return None;
        }
        Some(analytic.proxy_depth_map(pose, intr))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(n: usize) -> FeatureGrid {
        FeatureGrid::constant([n; 3], Aabb::cube(1.0), &[0.0; 4]).unwrap()
    }

    #[test]
    fn voxel_id_at_min_corner() {
        let g = grid(5);
        let loc = g.voxel_id(&Vec3::new(-1.0, -1.0, -1.0));
        assert_eq!(loc, CellCoord { cell: [0; 3], frac: [0.0; 3] });
    }

    #[test]
    fn voxel_id_tie_goes_to_upper_cell_start() {
        // 3 vertices per axis = 2 cells; the center lies on the shared face
        let g = grid(3);
        let loc = g.voxel_id(&Vec3::zeros());
        assert_eq!(loc.cell, [1, 1, 1]);
        assert_eq!(loc.frac, [0.0; 3]);
        // top face clamps to the last cell with frac 1
        let top = g.voxel_id(&Vec3::new(1.0, 1.0, 1.0));
        assert_eq!(top.cell, [1, 1, 1]);
        assert_eq!(top.frac, [1.0; 3]);
    }

    #[test]
    fn grid_invariants_enforced() {
        assert!(FeatureGrid::constant([1, 4, 4], Aabb::cube(1.0), &[0.0; 4]).is_err());
        assert!(FeatureGrid::constant([4; 3], Aabb::cube(1.0), &[0.0; 3]).is_err());
        assert!(FeatureGrid::new([2; 3], Aabb::cube(1.0), 4, vec![0.0; 31]).is_err());
    }

    #[test]
    fn fp16_quantization_bound() {
        let vals: Vec<f32> = (0..=1280).map(|i| -64.0 + i as f32 * 0.1).collect();
        for v in vals {
            let q = quantize(v);
            // half-ulp of fp16 at |v| ≤ 64 is at most 2^-5
            assert!((q - v).abs() <= v.abs().max(1e-4) * 2f32.powi(-11) + 1e-7, "{v} -> {q}");
        }
    }

    #[test]
    fn identity_mlp_shape() {
        let m = MlpWeights::identity(32);
        assert_eq!(m.hidden, 8);
        assert_eq!(m.layer_shapes(), [(32, 8), (8, 4)]);
    }

    proptest! {
        #[test]
        fn located_position_reconstructs(p in prop::array::uniform3(-1.0f64..=1.0)) {
            let g = grid(17);
            let p = Vec3::from(p);
            let loc = g.voxel_id(&p);
            let h = g.cell_size();
            for a in 0..3 {
                prop_assert!((0.0..=1.0).contains(&loc.frac[a]));
                let r = g.bbox().min[a] + (loc.cell[a] as f64 + loc.frac[a]) * h[a];
                prop_assert!((r - p[a]).abs() < 1e-5);
            }
        }

        #[test]
        fn trilinear_weights_sum_to_one(f in prop::array::uniform3(0.0f32..=1.0)) {
            let s: f32 = trilinear_weights(f).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-6);
        }
    }
}
