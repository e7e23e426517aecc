use std::ffi::{c_char, CString};
use std::ptr;

use radwarp::geometry::{CameraIntrinsics, Pose, Vec3};
use radwarp::renderer::{render_frame, RenderConfig};
use radwarp::scene::{build_synthetic_scene, SceneSpec};
use radwarp_ffi::*;

const SPEC: &str = r#"
resolution = [16, 16, 16]
channels = 4
[[primitive]]
kind = "sphere"
center = [0.0, 0.0, 0.0]
radius = 0.5
albedo = [0.8, 0.3, 0.2]
"#;

fn last_error() -> String {
    let mut buf = vec![0u8; 256];
    let n = unsafe { rw_last_error(buf.as_mut_ptr() as *mut c_char, buf.len()) };
    buf.truncate(n.min(255));
    String::from_utf8(buf).unwrap()
}

fn scene() -> *mut RwScene {
    let spec = CString::new(SPEC).unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { rw_scene_from_spec(spec.as_ptr(), &mut s) }, RwStatus::Ok);
    assert!(!s.is_null());
    s
}

fn view() -> (RwCamera, RwPose, RwRenderOptions) {
    let pose = Pose::look_at(Vec3::new(0.2, -0.1, -3.0), Vec3::zeros(), Vec3::new(0.0, -1.0, 0.0)).unwrap();
    let cam = RwCamera { f: 30.0, cx: 12.0, cy: 10.0, width: 24, height: 20 };
    let opts = RwRenderOptions { samples: 48, near: 1.0, far: 5.0, ..rw_render_options_default() };
    (cam, RwPose { matrix: pose.to_row_major() }, opts)
}

#[test]
fn render_matches_the_rust_api() {
    let s = scene();
    let (cam, pose, opts) = view();
    let n = cam.width * cam.height;
    let (mut color, mut depth) = (vec![0f32; 3 * n], vec![0f32; n]);
    let st = unsafe { rw_render_frame(s, &cam, &pose, &opts, color.as_mut_ptr(), color.len(), depth.as_mut_ptr(), depth.len()) };
    assert_eq!(st, RwStatus::Ok);

    let native_scene = build_synthetic_scene(&SceneSpec::parse(SPEC).unwrap()).unwrap();
    let intr = CameraIntrinsics::new(cam.f, cam.cx, cam.cy, cam.width, cam.height).unwrap();
    let cfg = RenderConfig { samples: 48, near: 1.0, far: 5.0, ..RenderConfig::default() };
    let f = render_frame(&Pose::from_row_major(&pose.matrix).unwrap(), &intr, &native_scene, &cfg).unwrap();
    let flat: Vec<f32> = f.color.data.iter().flatten().copied().collect();
    assert_eq!(color, flat);
    assert_eq!(depth.iter().map(|d| d.to_bits()).collect::<Vec<_>>(), f.depth.data.iter().map(|d| d.to_bits()).collect::<Vec<_>>());
    assert!(depth.iter().any(|d| d.is_finite()) && depth.iter().any(|d| d.is_infinite()));

    let mut db = 0.0;
    assert_eq!(unsafe { rw_psnr(color.as_ptr(), flat.as_ptr(), cam.width, cam.height, &mut db) }, RwStatus::Ok);
    assert_eq!(db, f64::INFINITY);
    unsafe { rw_scene_free(s) };
}

#[test]
fn errors_carry_codes_and_messages() {
    let mut s = ptr::null_mut();
    let bad = CString::new("resolution = [16, 16]").unwrap();
    assert_eq!(unsafe { rw_scene_from_spec(bad.as_ptr(), &mut s) }, RwStatus::Format);
    assert!(last_error().contains("scene spec"), "{}", last_error());
    assert!(s.is_null());

    assert_eq!(unsafe { rw_scene_from_spec(ptr::null(), &mut s) }, RwStatus::NullPointer);
    let missing = CString::new("/nonexistent/scene.bin").unwrap();
    assert_eq!(unsafe { rw_scene_load(missing.as_ptr(), &mut s) }, RwStatus::Io);

    let s = scene();
    let (cam, pose, opts) = view();
    let mut small = vec![0f32; 10];
    let st = unsafe { rw_render_frame(s, &cam, &pose, &opts, small.as_mut_ptr(), small.len(), ptr::null_mut(), 0) };
    assert_eq!(st, RwStatus::BufferTooSmall);

    let skew = RwPose { matrix: [2.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0] };
    let st = unsafe { rw_render_frame(s, &cam, &skew, &opts, ptr::null_mut(), 0, ptr::null_mut(), 0) };
    assert_eq!(st, RwStatus::InvalidInput);
    assert!(last_error().contains("orthonormal"));

    let mut db = 0.0;
    let a = [0f32; 3];
    assert_eq!(unsafe { rw_psnr(a.as_ptr(), a.as_ptr(), 0, 0, &mut db) }, RwStatus::InvalidInput);
    let need = unsafe { rw_last_error(ptr::null_mut(), 0) };
    assert!(need > 0);
    unsafe { rw_scene_free(s) };
    unsafe { rw_scene_free(ptr::null_mut()) };
}

#[test]
fn trace_stats_and_remote_model() {
    let s = scene();
    let (cam, pose, opts) = view();
    let mut mc = RwTraceStats::default();
    let mut pc = RwTraceStats::default();
    unsafe {
        assert_eq!(rw_feature_trace_stats(s, &cam, &pose, &opts, 1, 32 * 1024, 64, &mut mc), RwStatus::Ok);
        assert_eq!(rw_feature_trace_stats(s, &cam, &pose, &opts, 0, 32 * 1024, 64, &mut pc), RwStatus::Ok);
        assert_eq!(rw_feature_trace_stats(s, &cam, &pose, &opts, 0, 8, 64, &mut pc), RwStatus::InvalidConfig);
        rw_scene_free(s);
    }
    assert_eq!(mc.redundancy_ratio, 1.0);
    assert!(pc.events > mc.events);

    let r = rw_remote_model(1_000_000);
    assert_eq!((r.latency_s, r.energy_j), (0.1, 0.1));
}

#[test]
fn toy_scene_handle() {
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { rw_scene_toy(16, 3, &mut s) }, RwStatus::Ok);
    unsafe { rw_scene_free(s) };
}
