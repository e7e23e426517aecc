use std::path::Path;

use radwarp::geometry::CameraIntrinsics;
use radwarp::harness::{orbit_trajectory, run_downsampled, run_experiment, toy_scene_spec, ExperimentConfig, Mode, OrbitConfig};
use radwarp::renderer::{render_frame, RenderConfig};
use radwarp::scene::build_synthetic_scene;
use radwarp::sparw::FrameKind;

const SMALL: &str = r#"
seed = 3
toy_resolution = 24
sweep_windows = [1, 4]
sweep_phi_deg = [0.0, 0.5, 2.0, 8.0]

[orbit]
frames = 8

[image]
width = 32
height = 32

[render]
samples = 48

[warp]
window = 4

[memsim]
width = 24
height = 24
samples = 48
random_batches = 50
"#;

fn small(mode: Mode) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_toml(SMALL, Path::new(".")).unwrap();
    cfg.mode = mode;
    cfg.validate().unwrap();
    cfg
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn experiment_outputs_are_byte_identical_across_runs() {
    let cfg = small(Mode::Sparw);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_experiment(&cfg, a.path()).unwrap();
    run_experiment(&cfg, b.path()).unwrap();
    for name in ["summary.csv", "ledger.csv", "sweep.csv", "sweep_phi.csv", "trace_metrics.csv", "cycles_energy.csv"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
    assert!(a.path().join("frames/frame_0007.ppm").exists());
}

#[test]
fn render_is_independent_of_thread_count() {
    let scene = build_synthetic_scene(&toy_scene_spec(24, 1)).unwrap();
    let intr = CameraIntrinsics::from_fov(40, 30, 60.0).unwrap();
    let pose = orbit_trajectory(&OrbitConfig::default(), 1).unwrap()[5];
    let cfg = RenderConfig { samples: 64, ..RenderConfig::default() };
    let with =
        |n| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap().install(|| render_frame(&pose, &intr, &scene, &cfg).unwrap());
    let (one, four) = (with(1), with(4));
    assert_eq!(one.color, four.color);
    assert_eq!(
        one.depth.data.iter().map(|d| d.to_bits()).collect::<Vec<_>>(),
        four.depth.data.iter().map(|d| d.to_bits()).collect::<Vec<_>>()
    );
}

#[test]
fn ledger_accounts_for_every_pixel() {
    let cfg = small(Mode::Sparw);
    let dir = tempfile::tempdir().unwrap();
    let report = run_experiment(&cfg, dir.path()).unwrap();
    let px = 32 * 32;
    let ledger = read(dir.path(), "ledger.csv");
    let mut lines = ledger.lines();
    assert_eq!(lines.next(), Some("frame,kind,warped_px,sparse_px,void_px,psnr_vs_full,full_px"));
    let mut nerf = 0;
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        let n = |i: usize| f[i].parse::<usize>().unwrap();
        match f[1] {
            "reference" => assert_eq!((n(2), n(3), n(4), n(6)), (0, 0, 0, px)),
            "target" => assert_eq!(n(2) + n(3) + n(4), px, "{line}"),
            k => panic!("unexpected kind {k}"),
        }
        nerf += n(3) + n(6);
    }
    assert_eq!(report.value("nerf_pixels"), Some(nerf as f64));
    assert_eq!(report.value("full_render_pixels"), Some((8 * px) as f64));
}

#[test]
fn larger_warp_threshold_never_adds_nerf_work() {
    let report = run_experiment(&small(Mode::Sparw), tempfile::tempdir().unwrap().path()).unwrap();
    let fractions: Vec<f64> = report.phi_sweep.iter().map(|r| r.nerf_pixel_fraction).collect();
    assert_eq!(fractions.len(), 4);
    assert!(fractions.windows(2).all(|w| w[1] <= w[0]), "{fractions:?}");
    assert!(fractions[0] > 1.0, "every frame plus the references is rendered");
}

#[test]
fn memory_centric_mode_matches_pixel_centric_frames() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_experiment(&small(Mode::MemoryCentric), dir.path()).unwrap();
    assert_eq!(report.get("frames_identical_to_pixel_centric"), Some("1"));
    assert_eq!(report.get("memsim_frames_identical"), Some("1"));
    assert_eq!(report.value("memory_centric_redundancy_ratio"), Some(1.0));
}

#[test]
fn downsampled_baseline_renders_a_quarter_of_the_pixels() {
    let scene = build_synthetic_scene(&toy_scene_spec(24, 0)).unwrap();
    let intr = CameraIntrinsics::from_fov(32, 32, 60.0).unwrap();
    let poses = orbit_trajectory(&OrbitConfig { frames: 3, ..OrbitConfig::default() }, 0).unwrap();
    let out = run_downsampled(&poses, &intr, &scene, &RenderConfig { samples: 32, ..RenderConfig::default() }, None).unwrap();
    assert!(out.ledger.iter().all(|r| r.kind == FrameKind::Downsampled));
    assert_eq!(4 * out.nerf_pixels(), 3 * intr.pixel_count());

    let report = run_experiment(&small(Mode::Downsample2), tempfile::tempdir().unwrap().path()).unwrap();
    assert_eq!(report.value("nerf_pixel_fraction"), Some(0.25));
}
