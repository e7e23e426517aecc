//! Pinhole camera, rigid poses, and the unproject / transform / project
//! chain used by warping.
//!
//! Conventions: the camera looks down +Z in its own frame with +X right and
//! +Y down. Pixel `(i, j)` has its center at `(i + 0.5, j + 0.5)`. Poses are
//! camera-to-world. All math here is `f64`.

use nalgebra::{Matrix3, Rotation3, Vector3};

use crate::error::{Error, Result};
use crate::image::{DepthMap, Image, Rgb};

pub type Vec3 = Vector3<f64>;

/// Points with camera-space Z at or below this are culled by projection.
pub const Z_NEAR: f64 = 1e-4;

const ORTHO_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraIntrinsics {
    pub f: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(f: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        if !(f > 0.0) || !f.is_finite() {
            return Err(Error::input(format!("focal length must be positive, got {f}")));
        }
        if width == 0 || height == 0 {
            return Err(Error::input("image size must be non-zero"));
        }
        if !(0.0..width as f64).contains(&cx) || !(0.0..height as f64).contains(&cy) {
            return Err(Error::input(format!("principal point ({cx}, {cy}) outside {width}x{height} image")));
        }
        Ok(CameraIntrinsics { f, cx, cy, width, height })
    }

    /// Centered principal point and a horizontal field of view in degrees.
    pub fn from_fov(width: usize, height: usize, hfov_deg: f64) -> Result<Self> {
        let half = (hfov_deg.to_radians() * 0.5).tan();
        if !(half > 0.0) {
            return Err(Error::input(format!("field of view {hfov_deg} out of range")));
        }
        let f = width as f64 * 0.5 / half;
        Self::new(f, width as f64 * 0.5, height as f64 * 0.5, width, height)
    }

    /// Same field of view at a scaled resolution.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let width = (self.width as f64 * factor).round() as usize;
        let height = (self.height as f64 * factor).round() as usize;
        Self::new(self.f * factor, self.cx * factor, self.cy * factor, width, height)
    }

    pub fn pixel_center(&self, x: usize, y: usize) -> (f64, f64) {
        (x as f64 + 0.5, y as f64 + 0.5)
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Un-normalized camera-space direction through continuous pixel `px`.
    pub fn camera_direction(&self, px: (f64, f64)) -> Vec3 {
        Vec3::new((px.0 - self.cx) / self.f, (px.1 - self.cy) / self.f, 1.0)
    }
}

/// Rigid camera-to-world transform.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl Pose {
    pub fn identity() -> Self {
        Pose { rotation: Matrix3::identity(), translation: Vec3::zeros() }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self> {
        let err = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if err > ORTHO_TOL || (rotation.determinant() - 1.0).abs() > ORTHO_TOL {
            return Err(Error::input("pose rotation is not a proper orthonormal matrix"));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::input("pose translation is not finite"));
        }
        Ok(Pose { rotation, translation })
    }

    pub fn from_translation(t: Vec3) -> Self {
        Pose { rotation: Matrix3::identity(), translation: t }
    }

    pub fn from_rotation(r: Rotation3<f64>, t: Vec3) -> Self {
        Pose { rotation: *r.matrix(), translation: t }
    }

    /// Camera at `eye` looking toward `target`, with image-up along `up`.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Result<Self> {
        let forward = (target - eye).try_normalize(1e-12).ok_or_else(|| Error::input("eye equals target"))?;
        let right = forward.cross(&up).try_normalize(1e-12).ok_or_else(|| Error::input("up vector is parallel to the view direction"))?;
        let down = forward.cross(&right);
        let rotation = Matrix3::from_columns(&[right, down, forward]);
        Pose::new(rotation, eye)
    }

    pub fn center(&self) -> Vec3 {
        self.translation
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose { rotation: rt, translation: -(rt * self.translation) }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose { rotation: self.rotation * other.rotation, translation: self.rotation * other.translation + self.translation }
    }

    /// Maps reference-camera coordinates to target-camera coordinates.
    pub fn relative(reference: &Pose, target: &Pose) -> Pose {
        target.inverse().compose(reference)
    }

    /// Row-major 3×4 `[R | t]`.
    pub fn to_row_major(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        for r in 0..3 {
            for c in 0..3 {
                out[r * 4 + c] = self.rotation[(r, c)];
            }
            out[r * 4 + 3] = self.translation[r];
        }
        out
    }

    pub fn from_row_major(v: &[f64]) -> Result<Self> {
        if v.len() != 12 {
            return Err(Error::input(format!("pose needs 12 numbers, got {}", v.len())));
        }
        let rotation = Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]);
        Pose::new(rotation, Vec3::new(v[3], v[7], v[11]))
    }

    pub fn parse_line(line: &str) -> Result<Self> {
        let nums = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|_| Error::input(format!("bad pose number {s:?}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::from_row_major(&nums)
    }

    pub fn format_line(&self) -> String {
        self.to_row_major().iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ")
    }
}

/// Parses a trajectory: one pose (12 numbers) per line; blank lines and `#`
/// comments are ignored.
pub fn parse_trajectory(text: &str) -> Result<Vec<Pose>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| Pose::parse_line(l).map_err(|e| e.context(format!("trajectory line {}", i + 1))))
        .collect()
}

pub fn format_trajectory(poses: &[Pose]) -> String {
    poses.iter().map(|p| p.format_line() + "\n").collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
}

impl Ray {
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub colors: Vec<Rgb>,
    pub source_pixels: Vec<(u32, u32)>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn generate_ray(intr: &CameraIntrinsics, pose: &Pose, px: (f64, f64)) -> Result<Ray> {
    let (w, h) = (intr.width as f64, intr.height as f64);
    if !(0.0..=w).contains(&px.0) || !(0.0..=h).contains(&px.1) {
        return Err(Error::input(format!("pixel ({}, {}) outside {}x{} image", px.0, px.1, w, h)));
    }
    let dir = (pose.rotation * intr.camera_direction(px)).normalize();
    Ok(Ray { origin: pose.center(), direction: dir })
}

/// Ray through the center of pixel `(x, y)`.
pub fn pixel_ray(intr: &CameraIntrinsics, pose: &Pose, x: usize, y: usize) -> Ray {
    let dir = (pose.rotation * intr.camera_direction(intr.pixel_center(x, y))).normalize();
    Ray { origin: pose.center(), direction: dir }
}

/// Camera-space point for continuous pixel `px` at Z-depth `depth`.
pub fn unproject_pixel(px: (f64, f64), depth: f64, intr: &CameraIntrinsics) -> Vec3 {
    Vec3::new(depth * (px.0 - intr.cx) / intr.f, depth * (px.1 - intr.cy) / intr.f, depth)
}

/// Converts every finite-depth pixel into a camera-space point.
pub fn unproject(color: &Image, depth: &DepthMap, intr: &CameraIntrinsics) -> Result<PointCloud> {
    if color.width != depth.width || color.height != depth.height {
        return Err(Error::input("color and depth sizes differ"));
    }
    if color.width != intr.width || color.height != intr.height {
        return Err(Error::input("frame size does not match intrinsics"));
    }
    let mut pc = PointCloud::default();
    for y in 0..depth.height {
        for x in 0..depth.width {
            let d = depth.get(x, y);
            if d.is_nan() || d < 0.0 {
                return Err(Error::input(format!("invalid depth {d} at pixel ({x}, {y})")));
            }
            if d.is_infinite() {
                continue;
            }
            pc.points.push(unproject_pixel(intr.pixel_center(x, y), d as f64, intr));
            pc.colors.push(color.get(x, y));
            pc.source_pixels.push((x as u32, y as u32));
        }
    }
    Ok(pc)
}

pub fn transform_points(pc: &PointCloud, transform: &Pose) -> PointCloud {
    PointCloud {
        points: pc.points.iter().map(|p| transform.apply(p)).collect(),
        colors: pc.colors.clone(),
        source_pixels: pc.source_pixels.clone(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectedPoint {
    /// Continuous pixel coordinates.
    pub x: f64,
    pub y: f64,
    pub depth: f64,
    pub color: Rgb,
    /// Index of the point in the source cloud.
    pub index: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Projection {
    pub points: Vec<ProjectedPoint>,
    pub dropped_behind: usize,
    pub dropped_outside: usize,
}

pub fn project_point(p: &Vec3, intr: &CameraIntrinsics) -> Option<(f64, f64)> {
    if p.z <= Z_NEAR {
        return None;
    }
    Some((intr.f * p.x / p.z + intr.cx, intr.f * p.y / p.z + intr.cy))
}

pub fn project(pc: &PointCloud, intr: &CameraIntrinsics) -> Projection {
    let mut out = Projection::default();
    let (w, h) = (intr.width as f64, intr.height as f64);
    for (index, p) in pc.points.iter().enumerate() {
        match project_point(p, intr) {
            None => out.dropped_behind += 1,
            Some((x, y)) if x < 0.0 || y < 0.0 || x >= w || y >= h => out.dropped_outside += 1,
            Some((x, y)) => out.points.push(ProjectedPoint { x, y, depth: p.z, color: pc.colors[index], index }),
        }
    }
    out
}

/// Angle in `[0, π]` between two unit directions.
pub fn ray_angle(a: &Ray, b: &Ray) -> f64 {
    direction_angle(&a.direction, &b.direction)
}

pub fn direction_angle(a: &Vec3, b: &Vec3) -> f64 {
    a.dot(b).clamp(-1.0, 1.0).acos()
}
