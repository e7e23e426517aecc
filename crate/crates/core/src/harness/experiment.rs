use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{parse_trajectory, CameraIntrinsics, Pose};
use crate::image::write_bytes;
use crate::memsim::{
    attribute_savings, classify_trace, energy_report, mac_cycles, remote_model, render_memory_centric, simulate_bank_conflicts,
    simulate_cache, simulate_gu, tag_trace, trace_pixel_centric, AccessKind, AccessTrace, AddressMap, BankLayout, BankMode, EnergyModel,
    GuConfig, Level, Policy, RayIndexTable, TraceStats,
};
use crate::renderer::{render_frame, Frame, RenderConfig};
use crate::scene::{build_synthetic_scene, load_scene, MVoxelGrid, Scene, SceneSpec};
use crate::sparw::{format_psnr, ledger_csv, mean_target_psnr, run_sequence, FrameKind, LedgerRow, SequenceOutput, WarpConfig};

use super::baselines::{run_downsampled, run_temporal};
use super::{orbit_trajectory, overlap_percentage, psnr, toy_scene_spec};

pub const SUMMARY_HEADER: &str = "metric,value";
const MIN_IMAGE: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "pixel-centric")]
    PixelCentric,
    #[serde(rename = "memory-centric")]
    MemoryCentric,
    #[serde(rename = "sparw")]
    Sparw,
    #[serde(rename = "temp-warp")]
    TempWarp,
    #[serde(rename = "downsample-2")]
    Downsample2,
}

impl Mode {
    pub const ALL: [Mode; 5] = [Mode::PixelCentric, Mode::MemoryCentric, Mode::Sparw, Mode::TempWarp, Mode::Downsample2];

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::PixelCentric => "pixel-centric",
            Mode::MemoryCentric => "memory-centric",
            Mode::Sparw => "sparw",
            Mode::TempWarp => "temp-warp",
            Mode::Downsample2 => "downsample-2",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| Error::config(format!("unknown mode {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImageConfig {
    pub width: usize,
    pub height: usize,
    pub hfov_deg: f64,
}

impl Default for ImageConfig {
    fn default() -> Self {
        ImageConfig { width: 128, height: 128, hfov_deg: 60.0 }
    }
}

impl ImageConfig {
    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        if self.width < MIN_IMAGE || self.height < MIN_IMAGE {
            return Err(Error::config(format!("image {}x{} is smaller than {MIN_IMAGE}x{MIN_IMAGE}", self.width, self.height)));
        }
        CameraIntrinsics::from_fov(self.width, self.height, self.hfov_deg)
    }
}

/// Circular camera path used when no trajectory file is given.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrbitConfig {
    pub frames: usize,
    pub degrees_per_frame: f64,
    pub start_deg: f64,
    pub radius: f64,
    /// Vertical offset of the eye from the target (+Y is down).
    pub height: f64,
    pub target: [f64; 3],
    /// Uniform positional jitter per frame, in world units.
    pub jitter: f64,
}

impl Default for OrbitConfig {
    fn default() -> Self {
        OrbitConfig {
            frames: 33,
            degrees_per_frame: 1.5,
            start_deg: -24.0,
            radius: 0.75,
            height: -0.05,
            target: [0.0, 0.1, 0.3],
            jitter: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemsimConfig {
    pub width: usize,
    pub height: usize,
    /// Samples per ray; the render config's count when unset.
    pub samples: Option<usize>,
    /// Trajectory frame to trace.
    pub frame: usize,
    pub burst_bytes: u64,
    pub cache_bytes: u64,
    pub line_bytes: u64,
    pub lanes: usize,
    pub banks: usize,
    /// Ports per bank in the conflict model.
    pub bank_ports: usize,
    /// Uniform-random gather batches for the bank model.
    pub random_batches: usize,
}

impl Default for MemsimConfig {
    fn default() -> Self {
        MemsimConfig {
            width: 64,
            height: 64,
            samples: None,
            frame: 0,
            burst_bytes: 64,
            cache_bytes: 2 << 20,
            line_bytes: 64,
            lanes: 16,
            banks: 16,
            bank_ports: 1,
            random_batches: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub mode: Mode,
    /// TOML scene description; the built-in toy room when neither this nor
    /// `scene_file` is set.
    pub scene_spec: Option<PathBuf>,
    /// Binary scene file.
    pub scene_file: Option<PathBuf>,
    /// Vertices per axis of the toy room.
    pub toy_resolution: usize,
    /// One camera-to-world pose per line; the orbit when unset.
    pub trajectory: Option<PathBuf>,
    pub orbit: OrbitConfig,
    pub image: ImageConfig,
    pub render: RenderConfig,
    pub warp: WarpConfig,
    pub gu: GuConfig,
    pub energy: EnergyModel,
    pub memsim: MemsimConfig,
    /// Warp windows swept in `sparw` mode.
    pub sweep_windows: Vec<usize>,
    /// Warp thresholds swept in `sparw` mode, in degrees.
    pub sweep_phi_deg: Vec<f64>,
    pub write_frames: bool,
    pub write_traces: bool,
    #[serde(skip)]
    pub source: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            mode: Mode::Sparw,
            scene_spec: None,
            scene_file: None,
            toy_resolution: 64,
            trajectory: None,
            orbit: OrbitConfig::default(),
            image: ImageConfig::default(),
            render: RenderConfig::default(),
            warp: WarpConfig::default(),
            gu: GuConfig::default(),
            energy: EnergyModel::default(),
            memsim: MemsimConfig::default(),
            sweep_windows: vec![1, 6, 16, 26],
            sweep_phi_deg: vec![0.0, 0.25, 0.5, 1.0, 2.0, 4.0],
            write_frames: true,
            write_traces: false,
            source: None,
        }
    }
}

impl ExperimentConfig {
    /// Parses TOML; relative paths resolve against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        for p in [&mut cfg.scene_spec, &mut cfg.scene_file, &mut cfg.trajectory].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ctx = || format!("config {}", path.display());
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e).context(ctx()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = Self::from_toml(&text, base).map_err(|e| e.context(ctx()))?;
        cfg.source = Some(path.to_path_buf());
        cfg.validate().map_err(|e| e.context(ctx()))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.image.intrinsics()?;
        if self.memsim.width < MIN_IMAGE || self.memsim.height < MIN_IMAGE {
            return Err(Error::config(format!("memsim image must be at least {MIN_IMAGE}x{MIN_IMAGE}")));
        }
        if self.scene_spec.is_some() && self.scene_file.is_some() {
            return Err(Error::config("set at most one of scene_spec and scene_file"));
        }
        for p in [&self.scene_spec, &self.scene_file, &self.trajectory].into_iter().flatten() {
            if !p.is_file() {
                return Err(Error::config(format!("{} does not exist", p.display())));
            }
        }
        if self.trajectory.is_none() && self.orbit.frames == 0 {
            return Err(Error::config("orbit needs at least one frame"));
        }
        self.render.validate()?;
        self.warp.validate()?;
        self.gu.validate()?;
        if self.sweep_windows.contains(&0) {
            return Err(Error::config("sweep windows must be positive"));
        }
        if self.sweep_phi_deg.iter().any(|p| p.is_nan() || *p < 0.0) {
            return Err(Error::config("sweep thresholds must be non-negative"));
        }
        if self.memsim.lanes == 0 || self.memsim.banks == 0 || self.memsim.bank_ports == 0 || self.memsim.line_bytes == 0 {
            return Err(Error::config("memsim lanes, banks, ports and line size must be positive"));
        }
        Ok(())
    }

    pub fn scene(&self) -> Result<Scene> {
        if let Some(p) = &self.scene_file {
            return load_scene(p);
        }
        let mut spec = match &self.scene_spec {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                SceneSpec::parse(&text).map_err(|e| e.context(format!("scene spec {}", p.display())))?
            }
            None => toy_scene_spec(self.toy_resolution, self.seed),
        };
        spec.seed = self.seed;
        build_synthetic_scene(&spec)
    }

    pub fn poses(&self) -> Result<Vec<Pose>> {
        match &self.trajectory {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                let poses = parse_trajectory(&text).map_err(|e| e.context(format!("trajectory {}", p.display())))?;
                if poses.is_empty() {
                    return Err(Error::input(format!("trajectory {} has no poses", p.display())));
                }
                Ok(poses)
            }
            None => orbit_trajectory(&self.orbit, self.seed),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub window: usize,
    pub mean_psnr: Option<f64>,
    pub min_psnr: Option<f64>,
    pub nerf_pixel_fraction: f64,
    pub reference_renders: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhiRow {
    pub phi_deg: f64,
    pub mean_psnr: Option<f64>,
    pub nerf_pixel_fraction: f64,
}

/// Everything `run_experiment` writes, in memory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub summary: Vec<(String, String)>,
    pub ledger: Vec<LedgerRow>,
    pub sweep: Vec<SweepRow>,
    pub phi_sweep: Vec<PhiRow>,
    /// `(source, metric, value)`.
    pub trace_metrics: Vec<(String, String, String)>,
    /// `(metric, value, unit)`; every row is a model output.
    pub cycles_energy: Vec<(String, String, String)>,
}

impl Report {
    pub fn get(&self, metric: &str) -> Option<&str> {
        self.summary.iter().find(|(k, _)| k == metric).map(|(_, v)| v.as_str())
    }

    /// Numeric summary value; "inf" parses as +∞.
    pub fn value(&self, metric: &str) -> Option<f64> {
        self.get(metric).and_then(|v| v.parse().ok())
    }

    pub fn summary_csv(&self) -> String {
        let mut s = format!("{SUMMARY_HEADER}\n");
        for (k, v) in &self.summary {
            let _ = writeln!(s, "{k},{v}");
        }
        s
    }

    pub fn sweep_csv(&self) -> String {
        let mut s = String::from("window,mean_psnr_vs_full,min_psnr_vs_full,nerf_pixel_fraction,reference_renders\n");
        for r in &self.sweep {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.window,
                opt_psnr(r.mean_psnr),
                opt_psnr(r.min_psnr),
                num(r.nerf_pixel_fraction),
                r.reference_renders
            );
        }
        s
    }

    pub fn phi_sweep_csv(&self) -> String {
        let mut s = String::from("phi_deg,mean_psnr_vs_full,nerf_pixel_fraction\n");
        for r in &self.phi_sweep {
            let _ = writeln!(s, "{},{},{}", num(r.phi_deg), opt_psnr(r.mean_psnr), num(r.nerf_pixel_fraction));
        }
        s
    }

    pub fn trace_metrics_csv(&self) -> String {
        let mut s = String::from("source,metric,value\n");
        for (a, b, c) in &self.trace_metrics {
            let _ = writeln!(s, "{a},{b},{c}");
        }
        s
    }

    pub fn cycles_energy_csv(&self) -> String {
        let mut s = String::from("metric,value,unit,basis\n");
        for (a, b, c) in &self.cycles_energy {
            let _ = writeln!(s, "{a},{b},{c},modeled");
        }
        s
    }
}

fn num(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:.6}")
    }
}

fn opt_psnr(v: Option<f64>) -> String {
    v.map(format_psnr).unwrap_or_default()
}

fn min_psnr(rows: &[LedgerRow]) -> Option<f64> {
    rows.iter().filter(|r| r.kind != FrameKind::Reference).filter_map(|r| r.psnr_vs_full).reduce(f64::min)
}

fn nerf_fraction(out: &SequenceOutput, displayed: usize, px: usize) -> f64 {
    out.nerf_pixels() as f64 / (displayed * px) as f64
}

fn full_ledger(frames: &[Frame], truth: &[Frame]) -> Result<Vec<LedgerRow>> {
    frames
        .iter()
        .zip(truth)
        .enumerate()
        .map(|(k, (f, g))| {
            Ok(LedgerRow {
                frame: k,
                kind: FrameKind::Reference,
                warped_px: 0,
                sparse_px: 0,
                void_px: 0,
                psnr_vs_full: Some(psnr(&f.color, &g.color)?),
                full_px: f.intr.pixel_count(),
            })
        })
        .collect()
}

struct Summary(Vec<(String, String)>);

impl Summary {
    fn put(&mut self, k: &str, v: impl ToString) {
        self.0.push((k.to_string(), v.to_string()));
    }
    fn real(&mut self, k: &str, v: f64) {
        self.put(k, num(v));
    }
    fn psnr(&mut self, k: &str, v: Option<f64>) {
        self.put(k, opt_psnr(v));
    }
}

fn frames_equal(a: &Frame, b: &Frame) -> bool {
    let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    a.color == b.color && bits(&a.depth.data) == bits(&b.depth.data) && bits(&a.opacity) == bits(&b.opacity)
}

/// RIT-driven gather batches: `lanes` consecutive entries of one MVoxel
/// request the same corner in one batch, for each of the eight corners.
fn rit_batches(rit: &RayIndexTable, grid_mg: &MVoxelGrid, scene: &Scene, lanes: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for (m, list) in rit.lists.iter().enumerate() {
        for chunk in list.chunks(lanes) {
            for k in 0..8 {
                out.push(
                    chunk
                        .iter()
                        .map(|e| grid_mg.local_index(m, scene.grid.vertex_coords(e.vids[k] as usize)).expect("resident corner"))
                        .collect(),
                );
            }
        }
    }
    out
}

fn random_batches(count: usize, lanes: usize, vertices: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| (0..lanes).map(|_| rng.random_range(0..vertices)).collect()).collect()
}

fn trace_rows(rows: &mut Vec<(String, String, String)>, src: &str, s: &TraceStats) {
    for (k, v) in [
        ("events", s.events.to_string()),
        ("streaming_fraction", num(s.streaming_fraction)),
        ("bytes_total", s.bytes_total.to_string()),
        ("unique_bytes", s.unique_bytes.to_string()),
        ("redundancy_ratio", num(s.redundancy_ratio)),
        ("streaming_bytes", s.streaming_bytes.to_string()),
        ("random_bytes", s.random_bytes.to_string()),
    ] {
        rows.push((src.into(), k.into(), v));
    }
}

struct MemsimTraces {
    pixel_centric: AccessTrace,
    memory_centric: AccessTrace,
}

fn run_memsim(cfg: &ExperimentConfig, scene: &Scene, pose: &Pose, report: &mut Report, sum: &mut Summary) -> Result<MemsimTraces> {
    let ms = &cfg.memsim;
    let intr = ImageConfig { width: ms.width, height: ms.height, hfov_deg: cfg.image.hfov_deg }.intrinsics()?;
    let rcfg = RenderConfig { samples: ms.samples.unwrap_or(cfg.render.samples), ..cfg.render };
    let map = AddressMap::for_grid(&scene.grid, &scene.mlp, cfg.gu.vft_bytes)?;

    let full = render_frame(pose, &intr, scene, &rcfg)?;
    let mut mc = render_memory_centric(pose, &intr, scene, &map, &rcfg)?;
    let mut pc_trace = trace_pixel_centric(pose, &intr, scene, &map, &rcfg)?;
    let frames_identical = frames_equal(&full, &mc.frame);
    tag_trace(&mut mc.trace, ms.burst_bytes);
    tag_trace(&mut pc_trace, ms.burst_bytes);

    let pc_feat = pc_trace.select(Level::Dram, AccessKind::Feature);
    let mc_feat = mc.trace.select(Level::Dram, AccessKind::Feature);
    let pc = classify_trace(&pc_feat, ms.burst_bytes);
    let mcs = classify_trace(&mc_feat, ms.burst_bytes);
    let rows = &mut report.trace_metrics;
    trace_rows(rows, "pixel-centric", &pc);
    trace_rows(rows, "memory-centric", &mcs);
    for (src, ev) in [("pixel-centric", &pc_feat), ("memory-centric", &mc_feat)] {
        for (name, policy) in [("lru", Policy::Lru), ("belady", Policy::Belady)] {
            let c = simulate_cache(ev, ms.cache_bytes, ms.line_bytes, policy)?;
            rows.push((src.into(), format!("{name}_miss_rate"), num(c.miss_rate)));
            if src == "pixel-centric" {
                sum.real(&format!("{name}_miss_rate"), c.miss_rate);
            }
        }
    }

    let mg = &map.mgrid;
    let verts = mg.block_vertices();
    let ch = mg.channels();
    let words = verts.div_ceil(ms.banks) * ch.max(ch.div_ceil(ms.banks) * ms.banks);
    let workloads =
        [("rit", rit_batches(&mc.rit, mg, scene, ms.lanes)), ("uniform", random_batches(ms.random_batches, ms.lanes, verts, cfg.seed))];
    for (wname, batches) in &workloads {
        for mode in [BankMode::FeatureMajor, BankMode::ChannelMajor] {
            let layout = BankLayout::new(mode, ms.banks, words, ch, verts)?;
            let st = simulate_bank_conflicts(batches, &layout, ms.lanes, ms.bank_ports)?;
            let m = match mode {
                BankMode::FeatureMajor => "feature_major",
                BankMode::ChannelMajor => "channel_major",
            };
            rows.push((format!("banks-{wname}"), format!("{m}_conflict_rate"), num(st.conflict_rate)));
            rows.push((format!("banks-{wname}"), format!("{m}_stall_cycles"), st.stall_cycles.to_string()));
            sum.real(&format!("{m}_conflict_rate_{wname}"), st.conflict_rate);
        }
    }

    let gu = simulate_gu(&mc.rit, mg, &cfg.gu)?;
    let mac = mac_cycles(mc.rit.entry_count() as u64, &scene.mlp, &cfg.gu);
    let e_pc = energy_report(&pc_trace, &cfg.energy)?;
    let e_mc = energy_report(&mc.trace, &cfg.energy)?;
    let attr = attribute_savings(&e_pc, &e_mc);
    let remote = remote_model((cfg.image.width * cfg.image.height * 3) as u64, &cfg.energy);
    let ce = &mut report.cycles_energy;
    let mut put = |k: &str, v: String, u: &str| ce.push((k.into(), v, u.into()));
    put("rit_entries", mc.rit.entry_count().to_string(), "entries");
    put("rit_bytes", mc.rit.byte_size().to_string(), "bytes");
    put("occupied_mvoxels", mc.rit.occupied().to_string(), "mvoxels");
    put("gu_gather_cycles", gu.gather_cycles.to_string(), "cycles");
    put("gu_mvoxel_load_cycles", gu.mvoxel_load_cycles.to_string(), "cycles");
    put("gu_total_cycles", gu.total_cycles.to_string(), "cycles");
    put("mac_cycles", mac.to_string(), "cycles");
    for (name, e) in [("pixel_centric", &e_pc), ("memory_centric", &e_mc)] {
        put(&format!("{name}_dram_random_j"), format!("{:e}", e.dram_random_j), "J");
        put(&format!("{name}_dram_streaming_j"), format!("{:e}", e.dram_streaming_j), "J");
        put(&format!("{name}_sram_j"), format!("{:e}", e.sram_j), "J");
        put(&format!("{name}_total_j"), format!("{:e}", e.total_j), "J");
    }
    put("savings_total_j", format!("{:e}", attr.total_j), "J");
    put("savings_traffic_reduction_j", format!("{:e}", attr.traffic_reduction_j), "J");
    put("savings_streaming_conversion_j", format!("{:e}", attr.streaming_conversion_j), "J");
    put("savings_sram_j", format!("{:e}", attr.sram_j), "J");
    put("remote_frame_bytes", (cfg.image.width * cfg.image.height * 3).to_string(), "bytes");
    put("remote_tx_latency_s", format!("{:e}", remote.tx_latency_s), "s");
    put("remote_tx_energy_j", format!("{:e}", remote.tx_energy_j), "J");

    sum.put("memsim_frames_identical", frames_identical as u8);
    sum.real("pixel_centric_streaming_fraction", pc.streaming_fraction);
    sum.real("pixel_centric_redundancy_ratio", pc.redundancy_ratio);
    sum.real("memory_centric_streaming_fraction", mcs.streaming_fraction);
    sum.real("memory_centric_redundancy_ratio", mcs.redundancy_ratio);
    sum.put("gu_total_cycles_modeled", gu.total_cycles);
    sum.put("mac_cycles_modeled", mac);
    let ratio = if e_mc.total_j > 0.0 { e_pc.total_j / e_mc.total_j } else { f64::INFINITY };
    sum.real("energy_ratio_pixel_vs_memory_modeled", ratio);
    sum.real("savings_traffic_share_modeled", attr.traffic_share());
    sum.put("remote_tx_latency_s", format!("{:e}", remote.tx_latency_s));
    sum.put("remote_tx_energy_j", format!("{:e}", remote.tx_energy_j));
    Ok(MemsimTraces { pixel_centric: pc_trace, memory_centric: mc.trace })
}

/// Parts of an experiment to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Stages {
    /// Trajectory render in the configured mode, with ledger and frames.
    pub sequence: bool,
    /// Window and threshold sweeps (`sparw` mode only).
    pub sweeps: bool,
    /// Trace, cache, bank, cycle and energy models on one frame.
    pub memsim: bool,
}

impl Stages {
    pub const ALL: Stages = Stages { sequence: true, sweeps: true, memsim: true };
    pub const SEQUENCE: Stages = Stages { sequence: true, sweeps: false, memsim: false };
    pub const MEMSIM: Stages = Stages { sequence: false, sweeps: false, memsim: true };
}

/// Renders the trajectory in the configured mode against a full-render
/// ground truth, runs the memory model on one frame, and writes every CSV
/// (and optionally frames and traces) under `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Report> {
    run_stages(cfg, Stages::ALL, out_dir)
}

pub fn run_stages(cfg: &ExperimentConfig, stages: Stages, out_dir: &Path) -> Result<Report> {
    let ctx = match &cfg.source {
        Some(p) => format!("experiment {}", p.display()),
        None => "experiment".to_string(),
    };
    run(cfg, stages, out_dir).map_err(|e| e.context(ctx))
}

fn run_mode(
    cfg: &ExperimentConfig,
    scene: &Scene,
    poses: &[Pose],
    intr: &CameraIntrinsics,
    truth: &[Frame],
    sum: &mut Summary,
) -> Result<SequenceOutput> {
    Ok(match cfg.mode {
        Mode::PixelCentric => {
            let ledger = full_ledger(truth, truth)?;
            SequenceOutput { frames: truth.to_vec(), references: Vec::new(), schedule: Vec::new(), ledger }
        }
        Mode::MemoryCentric => {
            let map = AddressMap::for_grid(&scene.grid, &scene.mlp, cfg.gu.vft_bytes)?;
            let frames: Vec<Frame> =
                poses.iter().map(|p| Ok(render_memory_centric(p, intr, scene, &map, &cfg.render)?.frame)).collect::<Result<_>>()?;
            let identical = frames.iter().zip(truth).all(|(a, b)| frames_equal(a, b));
            sum.put("frames_identical_to_pixel_centric", identical as u8);
            let ledger = full_ledger(&frames, truth)?;
            SequenceOutput { frames, references: Vec::new(), schedule: Vec::new(), ledger }
        }
        Mode::Sparw => run_sequence(poses, intr, scene, &cfg.render, &cfg.warp, Some(truth))?,
        Mode::TempWarp => run_temporal(poses, intr, scene, &cfg.render, &cfg.warp, Some(truth))?,
        Mode::Downsample2 => run_downsampled(poses, intr, scene, &cfg.render, Some(truth))?,
    })
}

fn run_sweeps(
    cfg: &ExperimentConfig,
    scene: &Scene,
    poses: &[Pose],
    intr: &CameraIntrinsics,
    truth: &[Frame],
    report: &mut Report,
) -> Result<()> {
    let px = intr.pixel_count();
    for &window in &cfg.sweep_windows {
        let w = WarpConfig { window, ..cfg.warp };
        let s = run_sequence(poses, intr, scene, &cfg.render, &w, Some(truth))?;
        report.sweep.push(SweepRow {
            window,
            mean_psnr: s.mean_target_psnr(),
            min_psnr: min_psnr(&s.ledger),
            nerf_pixel_fraction: nerf_fraction(&s, poses.len(), px),
            reference_renders: s.references.len(),
        });
    }
    for &deg in &cfg.sweep_phi_deg {
        let w = WarpConfig { phi: deg.to_radians(), ..cfg.warp };
        let s = run_sequence(poses, intr, scene, &cfg.render, &w, Some(truth))?;
        report.phi_sweep.push(PhiRow {
            phi_deg: deg,
            mean_psnr: s.mean_target_psnr(),
            nerf_pixel_fraction: nerf_fraction(&s, poses.len(), px),
        });
    }
    Ok(())
}

fn run(cfg: &ExperimentConfig, stages: Stages, out_dir: &Path) -> Result<Report> {
    cfg.validate()?;
    let scene = cfg.scene()?;
    let poses = cfg.poses()?;
    let intr = cfg.image.intrinsics()?;
    let px = intr.pixel_count();

    let mut report = Report::default();
    let mut sum = Summary(Vec::new());
    sum.put("mode", cfg.mode.as_str());
    sum.put("seed", cfg.seed);
    sum.put("frames", poses.len());
    sum.put("width", intr.width);
    sum.put("height", intr.height);
    sum.put("warp_window", cfg.warp.window);

    let mut seq = None;
    if stages.sequence {
        let truth: Vec<Frame> = poses.iter().map(|p| render_frame(p, &intr, &scene, &cfg.render)).collect::<Result<_>>()?;
        let out = run_mode(cfg, &scene, &poses, &intr, &truth, &mut sum)?;
        if stages.sweeps && cfg.mode == Mode::Sparw {
            run_sweeps(cfg, &scene, &poses, &intr, &truth, &mut report)?;
        }
        let mut overlaps = Vec::new();
        for k in 1..poses.len() {
            overlaps.push(overlap_percentage(&truth[k - 1], &poses[k], &intr, &truth[k].depth)?);
        }
        sum.psnr("mean_psnr_vs_full", mean_target_psnr(&out.ledger));
        sum.psnr("min_psnr_vs_full", min_psnr(&out.ledger));
        sum.put("nerf_pixels", out.nerf_pixels());
        sum.put("full_render_pixels", poses.len() * px);
        sum.real("nerf_pixel_fraction", nerf_fraction(&out, poses.len(), px));
        sum.put("reference_renders", out.ledger.iter().filter(|r| r.kind == FrameKind::Reference).count());
        if overlaps.is_empty() {
            sum.put("mean_overlap_percent", "");
            sum.put("min_overlap_percent", "");
        } else {
            sum.real("mean_overlap_percent", overlaps.iter().sum::<f64>() / overlaps.len() as f64);
            sum.real("min_overlap_percent", overlaps.iter().copied().fold(f64::INFINITY, f64::min));
        }
        for r in &report.sweep {
            sum.psnr(&format!("mean_psnr_window_{}", r.window), r.mean_psnr);
        }
        report.ledger = out.ledger.clone();
        seq = Some(out);
    }

    let traces = if stages.memsim {
        let k = cfg.memsim.frame.min(poses.len() - 1);
        Some(run_memsim(cfg, &scene, &poses[k], &mut report, &mut sum)?)
    } else {
        None
    };
    report.summary = sum.0;

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let w = |name: &str, text: String| write_bytes(&out_dir.join(name), text.as_bytes());
    w("summary.csv", report.summary_csv())?;
    if let Some(seq) = &seq {
        w("ledger.csv", ledger_csv(&report.ledger))?;
        if !report.sweep.is_empty() || !report.phi_sweep.is_empty() {
            w("sweep.csv", report.sweep_csv())?;
            w("sweep_phi.csv", report.phi_sweep_csv())?;
        }
        if cfg.write_frames {
            let dir = out_dir.join("frames");
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            for (k, f) in seq.frames.iter().enumerate() {
                f.color.write_ppm(&dir.join(format!("frame_{k:04}.ppm")))?;
                f.depth.write_pfm(&dir.join(format!("frame_{k:04}.pfm")))?;
            }
        }
    }
    if let Some(traces) = &traces {
        w("trace_metrics.csv", report.trace_metrics_csv())?;
        w("cycles_energy.csv", report.cycles_energy_csv())?;
        if cfg.write_traces {
            w("trace_pixel_centric.csv", traces.pixel_centric.to_csv())?;
            w("trace_memory_centric.csv", traces.memory_centric.to_csv())?;
        }
    }
    Ok(report)
}
