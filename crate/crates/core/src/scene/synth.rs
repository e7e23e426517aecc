//! Analytic test scenes rasterized into a feature grid.
//!
//! Channel 0 holds a density logit built from the signed distance to the
//! nearest primitive, channels 1..4 hold color logits, and any remaining
//! channels carry seeded filler values. With the identity decoder the
//! rendered image therefore follows the analytic geometry closely enough to
//! serve as a test oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{pixel_ray, CameraIntrinsics, Pose, Ray, Vec3};
use crate::image::DepthMap;
use crate::scene::{Aabb, FeatureGrid, MlpWeights, Scene};

/// Density logits are clamped to this magnitude.
pub const LOGIT_LIMIT: f32 = 60.0;
/// Slack added to the proxy margin beyond the cell diagonal (√3 ≈ 1.732).
const PROXY_DIAGONAL_CELLS: f64 = 1.75;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PrimitiveShape {
    Sphere { center: [f64; 3], radius: f64 },
    Box { min: [f64; 3], max: [f64; 3] },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    #[serde(flatten)]
    pub shape: PrimitiveShape,
    pub albedo: [f32; 3],
}

impl Primitive {
    pub fn sphere(center: [f64; 3], radius: f64, albedo: [f32; 3]) -> Self {
        Primitive { shape: PrimitiveShape::Sphere { center, radius }, albedo }
    }

    pub fn cuboid(min: [f64; 3], max: [f64; 3], albedo: [f32; 3]) -> Self {
        Primitive { shape: PrimitiveShape::Box { min, max }, albedo }
    }

    pub fn sdf(&self, p: &Vec3) -> f64 {
        match &self.shape {
            PrimitiveShape::Sphere { center, radius } => (p - Vec3::from(*center)).norm() - radius,
            PrimitiveShape::Box { min, max } => {
                let c = (Vec3::from(*min) + Vec3::from(*max)) * 0.5;
                let half = (Vec3::from(*max) - Vec3::from(*min)) * 0.5;
                let q = (p - c).abs() - half;
                q.map(|v| v.max(0.0)).norm() + q.max().min(0.0)
            }
        }
    }

    /// Nearest non-negative ray parameter at which the ray enters the shape
    /// (0 if it starts inside).
    pub fn intersect(&self, ray: &Ray) -> Option<f64> {
        match &self.shape {
            PrimitiveShape::Sphere { center, radius } => {
                let oc = ray.origin - Vec3::from(*center);
                let b = oc.dot(&ray.direction);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let s = disc.sqrt();
                let (t0, t1) = (-b - s, -b + s);
                if t1 < 0.0 {
                    None
                } else {
                    Some(t0.max(0.0))
                }
            }
            PrimitiveShape::Box { min, max } => Aabb { min: *min, max: *max }.intersect(ray).map(|(t0, _)| t0.max(0.0)),
        }
    }

    /// Superset of the shape grown by `m` in every direction.
    pub fn inflated(&self, m: f64) -> Primitive {
        let shape = match &self.shape {
            PrimitiveShape::Sphere { center, radius } => PrimitiveShape::Sphere { center: *center, radius: radius + m },
            PrimitiveShape::Box { min, max } => PrimitiveShape::Box { min: min.map(|v| v - m), max: max.map(|v| v + m) },
        };
        Primitive { shape, albedo: self.albedo }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MlpKind {
    #[default]
    Identity,
    Random,
}

/// Scene description, normally read from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    /// Vertices per axis.
    #[serde(default = "default_resolution")]
    pub resolution: [usize; 3],
    #[serde(default = "default_channels")]
    pub channels: usize,
    #[serde(default = "default_bbox_min")]
    pub bbox_min: [f64; 3],
    #[serde(default = "default_bbox_max")]
    pub bbox_max: [f64; 3],
    #[serde(default)]
    pub mlp: MlpKind,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default)]
    pub seed: u64,
    /// Logit slope across the surface, in units of `LOGIT_LIMIT` per cell.
    #[serde(default = "default_sharpness")]
    pub sharpness: f64,
    /// Amplitude in `[0, 1]` of a smooth solid albedo texture.
    #[serde(default)]
    pub texture: f32,
    /// Spatial period of that texture in world units.
    #[serde(default = "default_texture_period")]
    pub texture_period: f64,
    #[serde(default, rename = "primitive")]
    pub primitives: Vec<Primitive>,
}

fn default_resolution() -> [usize; 3] {
    [64; 3]
}
fn default_channels() -> usize {
    32
}
fn default_bbox_min() -> [f64; 3] {
    [-1.0; 3]
}
fn default_bbox_max() -> [f64; 3] {
    [1.0; 3]
}
fn default_hidden() -> usize {
    16
}
fn default_sharpness() -> f64 {
    2.0
}
fn default_texture_period() -> f64 {
    1.0
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            resolution: default_resolution(),
            channels: default_channels(),
            bbox_min: default_bbox_min(),
            bbox_max: default_bbox_max(),
            mlp: MlpKind::Identity,
            hidden: default_hidden(),
            seed: 0,
            sharpness: default_sharpness(),
            texture: 0.0,
            texture_period: default_texture_period(),
            primitives: Vec::new(),
        }
    }
}

impl SceneSpec {
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim().is_empty() {
            return Err(Error::input("scene spec is empty"));
        }
        let spec: SceneSpec = toml::from_str(text).map_err(|e| Error::format(format!("scene spec: {e}")))?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene spec serializes")
    }

    pub fn with_primitives(mut self, primitives: Vec<Primitive>) -> Self {
        self.primitives = primitives;
        self
    }

    pub fn bbox(&self) -> Aabb {
        Aabb { min: self.bbox_min, max: self.bbox_max }
    }
}

/// Analytic geometry of a synthetic scene.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalyticScene {
    pub primitives: Vec<Primitive>,
    /// Proxy inflation distance in world units.
    pub margin: f64,
}

impl AnalyticScene {
    fn hit(prims: &[Primitive], ray: &Ray) -> Option<(f64, usize)> {
        prims.iter().enumerate().filter_map(|(i, p)| p.intersect(ray).map(|t| (t, i))).min_by(|a, b| a.0.total_cmp(&b.0))
    }

    /// Exact first-hit distance and primitive index.
    pub fn intersect(&self, ray: &Ray) -> Option<(f64, usize)> {
        Self::hit(&self.primitives, ray)
    }

    fn depth_map_of(prims: &[Primitive], pose: &Pose, intr: &CameraIntrinsics) -> DepthMap {
        let mut d = DepthMap::new(intr.width, intr.height, f32::INFINITY);
        for y in 0..intr.height {
            for x in 0..intr.width {
                let ray = pixel_ray(intr, pose, x, y);
                if let Some((t, _)) = Self::hit(prims, &ray) {
                    let cam_z = (pose.rotation.transpose() * ray.direction).z;
                    d.set(x, y, (t * cam_z) as f32);
                }
            }
        }
        d
    }

    /// Camera-Z depth of the exact surfaces (+∞ on misses).
    pub fn depth_map(&self, pose: &Pose, intr: &CameraIntrinsics) -> DepthMap {
        Self::depth_map_of(&self.primitives, pose, intr)
    }

    /// Conservative geometry depth: primitives grown by `margin`. A pixel
    /// with infinite proxy depth renders to exactly the background.
    pub fn proxy_depth_map(&self, pose: &Pose, intr: &CameraIntrinsics) -> DepthMap {
        let grown: Vec<_> = self.primitives.iter().map(|p| p.inflated(self.margin)).collect();
        Self::depth_map_of(&grown, pose, intr)
    }

    fn nearest(&self, p: &Vec3) -> Option<(f64, &Primitive)> {
        self.primitives.iter().map(|q| (q.sdf(p), q)).min_by(|a, b| a.0.total_cmp(&b.0))
    }
}

fn logit(c: f32) -> f32 {
    let c = c.clamp(0.02, 0.98);
    (c / (1.0 - c)).ln()
}

/// Rasterizes `spec` into a feature grid and decoder.
pub fn build_synthetic_scene(spec: &SceneSpec) -> Result<Scene> {
    let bbox = spec.bbox();
    if spec.channels < super::MLP_OUTPUTS {
        return Err(Error::input(format!("scene needs at least 4 channels, got {}", spec.channels)));
    }
    if spec.hidden == 0 {
        return Err(Error::input("MLP hidden width must be positive"));
    }
    if !(0.0..=1.0).contains(&spec.texture) || !(spec.texture_period > 0.0) || !(spec.sharpness > 0.0) {
        return Err(Error::input("texture amplitude, texture period or sharpness out of range"));
    }
    let dims = spec.resolution;
    let c = spec.channels;
    // validate dims/bbox before the per-vertex loop
    FeatureGrid::new(dims, bbox, c, vec![0.0; dims.iter().product::<usize>() * c])?;
    let hx = (0..3).map(|a| (bbox.max[a] - bbox.min[a]) / (dims[a] - 1) as f64).collect::<Vec<_>>();
    let h = hx.iter().copied().fold(f64::INFINITY, f64::min);
    let h_max = hx.iter().copied().fold(0.0, f64::max);
    // Samples farther than this from every surface only touch vertices whose
    // logit is clamped at -LOGIT_LIMIT, so their opacity is exactly zero.
    let margin = h / spec.sharpness + PROXY_DIAGONAL_CELLS * h_max;
    let analytic = AnalyticScene { primitives: spec.primitives.clone(), margin };
    let slope = spec.sharpness * LOGIT_LIMIT as f64 / h;
    let omega = std::f64::consts::TAU / spec.texture_period;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let n = dims.iter().product::<usize>();
    let mut features = vec![0.0f32; n * c];
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let id = x + dims[0] * (y + dims[1] * z);
                let p = Vec3::new(bbox.min[0] + x as f64 * hx[0], bbox.min[1] + y as f64 * hx[1], bbox.min[2] + z as f64 * hx[2]);
                let f = &mut features[id * c..(id + 1) * c];
                match analytic.nearest(&p) {
                    None => {
                        f[0] = -LOGIT_LIMIT;
                        f[1..4].fill(0.0);
                    }
                    Some((d, prim)) => {
                        f[0] = ((-d * slope) as f32).clamp(-LOGIT_LIMIT, LOGIT_LIMIT);
                        let shade =
                            1.0 - spec.texture * 0.5 * (1.0 + ((omega * p.x).sin() * (omega * p.y).sin() * (omega * p.z).sin()) as f32);
                        for k in 0..3 {
                            f[1 + k] = logit(prim.albedo[k] * shade);
                        }
                    }
                }
                for v in f[4..].iter_mut() {
                    *v = rng.random_range(-1.0f32..1.0);
                }
            }
        }
    }
    let grid = FeatureGrid::new(dims, bbox, c, features)?;
    let mlp = match spec.mlp {
        MlpKind::Identity => MlpWeights::identity(c),
        MlpKind::Random => MlpWeights::random(c, spec.hidden, spec.seed ^ 0x9e37_79b9_7f4a_7c15),
    };
    let mut scene = Scene::new(grid, mlp)?;
    scene.analytic = Some(analytic);
    Ok(scene)
}
