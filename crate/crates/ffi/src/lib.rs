//! C ABI over the renderer, warping metrics and memory-system model.
//!
//! Every fallible call returns an [`RwStatus`]; on failure the message is
//! kept per thread and read back with [`rw_last_error`]. Scenes are opaque
//! handles owned by the caller and released with [`rw_scene_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use radwarp::geometry::{CameraIntrinsics, Pose};
use radwarp::harness::toy_scene_spec;
use radwarp::image::Image;
use radwarp::memsim::{
    classify_trace, remote_model, render_memory_centric, trace_pixel_centric, AccessKind, AddressMap, EnergyModel, Level,
};
use radwarp::renderer::{render_frame, RenderConfig};
use radwarp::scene::{build_synthetic_scene, load_scene, Scene, SceneSpec};
use radwarp::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RwStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    InvalidConfig = 3,
    Format = 4,
    Io = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Opaque scene handle.
pub struct RwScene {
    scene: Scene,
}

/// Pinhole camera; `width` and `height` in pixels.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct RwCamera {
    pub f: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

/// Camera-to-world pose as a row-major 3×4 `[R | t]`.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct RwPose {
    pub matrix: [f64; 12],
}

#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct RwRenderOptions {
    pub samples: usize,
    pub near: f64,
    pub far: f64,
    pub background: [f32; 3],
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct RwTraceStats {
    pub events: usize,
    pub streaming_fraction: f64,
    pub redundancy_ratio: f64,
    pub bytes_total: u64,
    pub unique_bytes: u64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct RwRemoteCost {
    pub latency_s: f64,
    pub energy_j: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_error(msg: &str) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.as_bytes().to_vec());
}

fn status_of(e: &Error) -> RwStatus {
    match e {
        Error::Input(_) => RwStatus::InvalidInput,
        Error::Config(_) => RwStatus::InvalidConfig,
        Error::Format(_) => RwStatus::Format,
        Error::Io { .. } => RwStatus::Io,
        Error::Context { source, .. } => status_of(source),
    }
}

struct Fail(RwStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(RwStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> RwStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RwStatus::Ok,
        Ok(Err(Fail(s, msg))) => {
            set_error(&msg);
            s
        }
        Err(_) => {
            set_error("internal panic");
            RwStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(RwStatus::InvalidInput, format!("{what} is not UTF-8")))
}

unsafe fn emit_scene(scene: Scene, out: *mut *mut RwScene) -> Result<(), Fail> {
    *out = Box::into_raw(Box::new(RwScene { scene }));
    Ok(())
}

fn camera(c: &RwCamera) -> Result<CameraIntrinsics, Fail> {
    Ok(CameraIntrinsics::new(c.f, c.cx, c.cy, c.width, c.height)?)
}

fn pose(p: &RwPose) -> Result<Pose, Fail> {
    Ok(Pose::from_row_major(&p.matrix)?)
}

fn render_config(o: &RwRenderOptions) -> RenderConfig {
    RenderConfig { samples: o.samples, near: o.near, far: o.far, background: o.background, ..RenderConfig::default() }
}

/// Copies the calling thread's last error message (NUL-terminated, truncated
/// to `len`) into `buf` and returns the full message length without the NUL.
/// `buf` may be null to query the length.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn rw_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Default render options.
#[no_mangle]
pub extern "C" fn rw_render_options_default() -> RwRenderOptions {
    let c = RenderConfig::default();
    RwRenderOptions { samples: c.samples, near: c.near, far: c.far, background: c.background }
}

/// Builds a synthetic scene from TOML spec text.
///
/// # Safety
/// `spec` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rw_scene_from_spec(spec: *const c_char, out: *mut *mut RwScene) -> RwStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = SceneSpec::parse(text(spec, "spec")?)?;
        emit_scene(build_synthetic_scene(&spec)?, out)
    })
}

/// Builds the standard toy room at `resolution` vertices per axis.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rw_scene_toy(resolution: usize, seed: u64, out: *mut *mut RwScene) -> RwStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        emit_scene(build_synthetic_scene(&toy_scene_spec(resolution, seed))?, out)
    })
}

/// Loads a binary scene file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rw_scene_load(path: *const c_char, out: *mut *mut RwScene) -> RwStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        emit_scene(load_scene(Path::new(text(path, "path")?))?, out)
    })
}

/// Releases a scene. Null is ignored.
///
/// # Safety
/// `scene` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rw_scene_free(scene: *mut RwScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// Renders one frame. `color` receives `3·W·H` floats (row-major RGB) and
/// `depth` receives `W·H` floats, +∞ where nothing was hit. Either output
/// may be null to skip it.
///
/// # Safety
/// All non-null pointers must be valid; `color` for `color_len` floats and
/// `depth` for `depth_len` floats.
#[no_mangle]
pub unsafe extern "C" fn rw_render_frame(
    scene: *const RwScene,
    cam: *const RwCamera,
    pose_in: *const RwPose,
    options: *const RwRenderOptions,
    color: *mut f32,
    color_len: usize,
    depth: *mut f32,
    depth_len: usize,
) -> RwStatus {
    guard(|| {
        let (Some(scene), Some(cam), Some(p), Some(o)) = (scene.as_ref(), cam.as_ref(), pose_in.as_ref(), options.as_ref()) else {
            return Err(null("scene, camera, pose or options"));
        };
        let intr = camera(cam)?;
        let n = intr.pixel_count();
        if (!color.is_null() && color_len < 3 * n) || (!depth.is_null() && depth_len < n) {
            return Err(Fail(RwStatus::BufferTooSmall, format!("need {} color and {n} depth floats", 3 * n)));
        }
        let f = render_frame(&pose(p)?, &intr, &scene.scene, &render_config(o))?;
        if !color.is_null() {
            let out = std::slice::from_raw_parts_mut(color, 3 * n);
            for (dst, src) in out.chunks_exact_mut(3).zip(&f.color.data) {
                dst.copy_from_slice(src);
            }
        }
        if !depth.is_null() {
            std::slice::from_raw_parts_mut(depth, n).copy_from_slice(&f.depth.data);
        }
        Ok(())
    })
}

/// PSNR in dB between two `width × height` RGB float images; +∞ when equal.
///
/// # Safety
/// `a` and `b` must each hold `3·width·height` floats; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rw_psnr(a: *const f32, b: *const f32, width: usize, height: usize, out: *mut f64) -> RwStatus {
    guard(|| {
        if a.is_null() || b.is_null() || out.is_null() {
            return Err(null("image or out"));
        }
        let n = width * height;
        let image = |p: *const f32| Image {
            width,
            height,
            data: std::slice::from_raw_parts(p, 3 * n).chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        };
        *out = radwarp::image::psnr(&image(a), &image(b))?;
        Ok(())
    })
}

/// Wireless cost of shipping `bytes` with the default link model.
#[no_mangle]
pub extern "C" fn rw_remote_model(bytes: u64) -> RwRemoteCost {
    let c = remote_model(bytes, &EnergyModel::default());
    RwRemoteCost { latency_s: c.tx_latency_s, energy_j: c.tx_energy_j }
}

/// Feature DRAM trace statistics for one frame, in memory-centric order when
/// `memory_centric` is non-zero and pixel order otherwise. MVoxels are sized
/// for `buffer_bytes` of on-chip feature storage.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rw_feature_trace_stats(
    scene: *const RwScene,
    cam: *const RwCamera,
    pose_in: *const RwPose,
    options: *const RwRenderOptions,
    memory_centric: i32,
    buffer_bytes: usize,
    burst_bytes: u64,
    out: *mut RwTraceStats,
) -> RwStatus {
    guard(|| {
        let (Some(scene), Some(cam), Some(p), Some(o), false) =
            (scene.as_ref(), cam.as_ref(), pose_in.as_ref(), options.as_ref(), out.is_null())
        else {
            return Err(null("scene, camera, pose, options or out"));
        };
        let s = &scene.scene;
        let (intr, pose, cfg) = (camera(cam)?, pose(p)?, render_config(o));
        let map = AddressMap::for_grid(&s.grid, &s.mlp, buffer_bytes)?;
        let trace = if memory_centric != 0 {
            render_memory_centric(&pose, &intr, s, &map, &cfg)?.trace
        } else {
            trace_pixel_centric(&pose, &intr, s, &map, &cfg)?
        };
        let st = classify_trace(&trace.select(Level::Dram, AccessKind::Feature), burst_bytes);
        *out = RwTraceStats {
            events: st.events,
            streaming_fraction: st.streaming_fraction,
            redundancy_ratio: st.redundancy_ratio,
            bytes_total: st.bytes_total,
            unique_bytes: st.unique_bytes,
        };
        Ok(())
    })
}
