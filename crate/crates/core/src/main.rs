use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use radwarp::harness::{run_experiment, run_stages, ExperimentConfig, Mode, Stages};
use radwarp::renderer::render_frame;
use radwarp::scene::save_scene;
use radwarp::{Error, Result};

#[derive(Parser)]
#[command(name = "radwarp", version, about = "Voxel radiance field rendering, sparse warping and memory modeling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render one trajectory frame in full.
    Render {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        frame: usize,
    },
    /// Render the trajectory in the configured mode (sparse warping by default).
    WarpSeq {
        #[command(flatten)]
        common: Common,
    },
    /// Trace one frame and run the cache, bank, cycle and energy models.
    Memsim {
        #[command(flatten)]
        common: Common,
    },
    /// Full experiment: trajectory, sweeps and memory models.
    Report {
        #[command(flatten)]
        common: Common,
    },
    /// Write the configured scene as a binary scene file.
    BuildScene {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
    #[arg(long)]
    scene_spec: Option<PathBuf>,
    #[arg(long)]
    scene_file: Option<PathBuf>,
    #[arg(long)]
    trajectory: Option<PathBuf>,
    /// Orbit length when no trajectory file is given.
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    phi_deg: Option<f64>,
    /// Skip writing per-frame images.
    #[arg(long)]
    no_frames: bool,
    /// Also write the raw access traces.
    #[arg(long)]
    traces: bool,
    /// Output directory (or file, for build-scene).
    #[arg(long, short, default_value = "out")]
    out: PathBuf,
}

fn parse_mode(s: &str) -> std::result::Result<Mode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(p) = &self.scene_spec {
            cfg.scene_spec = Some(p.clone());
        }
        if let Some(p) = &self.scene_file {
            cfg.scene_file = Some(p.clone());
        }
        if let Some(p) = &self.trajectory {
            cfg.trajectory = Some(p.clone());
        }
        if let Some(n) = self.frames {
            cfg.orbit.frames = n;
        }
        if let Some(w) = self.width {
            cfg.image.width = w;
        }
        if let Some(h) = self.height {
            cfg.image.height = h;
        }
        if let Some(n) = self.samples {
            cfg.render.samples = n;
        }
        if let Some(n) = self.window {
            cfg.warp.window = n;
        }
        if let Some(d) = self.phi_deg {
            cfg.warp.phi = d.to_radians();
        }
        if self.no_frames {
            cfg.write_frames = false;
        }
        if self.traces {
            cfg.write_traces = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn render_one(cfg: &ExperimentConfig, frame: usize, out: &Path) -> Result<()> {
    let poses = cfg.poses()?;
    let pose = poses.get(frame).ok_or_else(|| Error::input(format!("frame {frame} is beyond the {}-pose trajectory", poses.len())))?;
    let scene = cfg.scene()?;
    let f = render_frame(pose, &cfg.image.intrinsics()?, &scene, &cfg.render)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let stem = format!("frame_{frame:04}");
    f.color.write_ppm(&out.join(format!("{stem}.ppm")))?;
    f.depth.write_pfm(&out.join(format!("{stem}.pfm")))?;
    println!("{}", out.join(format!("{stem}.ppm")).display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Render { common, frame } => render_one(&common.config()?, frame, &common.out),
        Command::WarpSeq { common } => {
            let r = run_stages(&common.config()?, Stages::SEQUENCE, &common.out)?;
            print!("{}", r.summary_csv());
            Ok(())
        }
        Command::Memsim { common } => {
            let r = run_stages(&common.config()?, Stages::MEMSIM, &common.out)?;
            print!("{}", r.summary_csv());
            Ok(())
        }
        Command::Report { common } => {
            let r = run_experiment(&common.config()?, &common.out)?;
            print!("{}", r.summary_csv());
            Ok(())
        }
        Command::BuildScene { common } => {
            let scene = common.config()?.scene()?;
            if let Some(dir) = common.out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            save_scene(&scene, &common.out)?;
            println!("{}", common.out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("radwarp: {e}");
            ExitCode::FAILURE
        }
    }
}
