use std::io::Write as _;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use splatcap_cli::{
    bench, info_report, load_dataset, parse_resolution, parse_vec3, render_frames, CameraPath, Keyframe, Orbit,
};
use splatcap_core::camera::CameraIntrinsics;
use splatcap_core::gaussian::SplatCloud;
use splatcap_core::math::Vec3;
use splatcap_core::optim::{seed_from_points, train_from, Progress, TrainConfig, TrainOptions};
use splatcap_core::ply::{read_splat_ply, write_splat_ply, write_splat_ply_ascii};
use splatcap_service::{Service, ServiceConfig};

#[derive(Parser)]
#[command(name = "splatcap", version, about = "Gaussian splat capture toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print a summary of a splat PLY file
    Info { model: PathBuf },
    /// Rewrite a splat PLY as binary or ASCII
    Convert {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = PlyFormat::Binary)]
        format: PlyFormat,
    },
    /// Render a camera path to PNG frames
    Render {
        model: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        view: ViewArgs,
        #[arg(long, value_parser = parse_vec3, default_value = "0,0,0")]
        background: Vec3,
    },
    /// Train a model from a dataset directory (images/ + sparse/)
    Train {
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// TOML file with training parameters
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        downscale: Option<u32>,
        /// Start from this PLY instead of seeding from the sparse points
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
    /// Time renders along an orbit
    Bench {
        model: PathBuf,
        #[command(flatten)]
        view: ViewArgs,
        #[arg(long, default_value_t = 2)]
        warmup: usize,
    },
    /// Run the job service
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PlyFormat {
    Binary,
    Ascii,
}

#[derive(Args)]
struct ViewArgs {
    #[arg(long, value_parser = parse_resolution, default_value = "640x480")]
    resolution: (u32, u32),
    #[arg(long, default_value_t = 36)]
    frames: usize,
    /// Horizontal field of view in degrees
    #[arg(long, default_value_t = 60.0)]
    fov: f64,
    #[arg(long, value_parser = parse_vec3)]
    center: Option<Vec3>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    height: Option<f64>,
    /// JSON list of {"eye", "target", "up"?} poses replacing the orbit
    #[arg(long)]
    poses: Option<PathBuf>,
}

impl ViewArgs {
    fn intrinsics(&self) -> Result<CameraIntrinsics> {
        if !(self.fov > 0.0 && self.fov < 180.0) {
            bail!("--fov must be in (0, 180), got {}", self.fov);
        }
        Ok(CameraIntrinsics::from_fov(self.resolution.0, self.resolution.1, self.fov))
    }

    fn path(&self, cloud: &SplatCloud, intr: &CameraIntrinsics) -> Result<CameraPath> {
        if let Some(file) = &self.poses {
            let text = std::fs::read_to_string(file).with_context(|| format!("cannot read {}", file.display()))?;
            let keys: Vec<Keyframe> =
                serde_json::from_str(&text).with_context(|| format!("invalid poses in {}", file.display()))?;
            return Ok(CameraPath::Keyframes(keys));
        }
        let mut orbit = Orbit::framing(cloud, intr, self.frames);
        if let Some(c) = self.center {
            orbit.center = c;
        }
        if let Some(r) = self.radius {
            orbit.radius = r;
        }
        if let Some(h) = self.height {
            orbit.height = h;
        }
        Ok(CameraPath::Orbit(orbit))
    }
}

fn read_model(path: &Path) -> Result<SplatCloud> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    read_splat_ply(&bytes).with_context(|| format!("{}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::Info { model } => {
            write!(stdout, "{}", info_report(&read_model(&model)?))?;
        }
        Command::Convert { input, output, format } => {
            let cloud = read_model(&input)?;
            let bytes = match format {
                PlyFormat::Binary => write_splat_ply(&cloud),
                PlyFormat::Ascii => write_splat_ply_ascii(&cloud),
            };
            write_file(&output, &bytes)?;
            writeln!(stdout, "count: {}", cloud.len())?;
        }
        Command::Render {
            model,
            out_dir,
            view,
            background,
        } => {
            let cloud = read_model(&model)?;
            let intr = view.intrinsics()?;
            let cameras = view.path(&cloud, &intr)?.cameras(intr)?;
            std::fs::create_dir_all(&out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
            let frames = render_frames(&cloud, &cameras, background)?;
            for (i, img) in frames.iter().enumerate() {
                let path = out_dir.join(format!("frame_{i:04}.png"));
                write_file(&path, &img.encode_png()?)?;
            }
            writeln!(stdout, "frames: {}", frames.len())?;
        }
        Command::Train {
            dataset,
            out,
            config,
            iterations,
            seed,
            downscale,
            init,
            quiet,
        } => {
            let mut cfg = match &config {
                Some(path) => {
                    let text =
                        std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
                    toml::from_str::<TrainConfig>(&text).with_context(|| format!("invalid {}", path.display()))?
                }
                None => TrainConfig::default(),
            };
            cfg.iterations = iterations.unwrap_or(cfg.iterations);
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.downscale = downscale.unwrap_or(cfg.downscale);
            cfg.validate()?;
            let data = load_dataset(&dataset, cfg.downscale)?;
            let cloud = match &init {
                Some(path) => read_model(path)?,
                None => seed_from_points(&data.seed_points)?,
            };
            std::fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
            let interval = cfg.checkpoint_interval.max(1);
            let mut report_progress = |p: &Progress| {
                if !quiet && (p.iteration % interval == 0 || p.iteration == p.total) {
                    eprintln!("iteration {}/{} splats {} loss {:.6}", p.iteration, p.total, p.splat_count, p.loss);
                }
                ControlFlow::Continue(())
            };
            let options = TrainOptions {
                eval_views: &[],
                progress: Some(&mut report_progress),
            };
            let (cloud, report) = train_from(&data, cloud, &cfg, options)?;
            write_file(&out.join("model.ply"), &write_splat_ply(&cloud))?;
            write_file(&out.join("metrics.log"), report.metrics_log().as_bytes())?;
            let last = report.last().context("training produced no checkpoint")?;
            writeln!(stdout, "iterations: {}", last.iteration)?;
            writeln!(stdout, "splats: {}", last.splat_count)?;
            if last.psnr.is_infinite() {
                writeln!(stdout, "final_psnr: inf")?;
            } else {
                writeln!(stdout, "final_psnr: {:.4}", last.psnr)?;
            }
        }
        Command::Bench { model, view, warmup } => {
            let cloud = read_model(&model)?;
            let intr = view.intrinsics()?;
            let cameras = view.path(&cloud, &intr)?.cameras(intr)?;
            write!(stdout, "{}", bench(&cloud, &cameras, warmup)?.lines())?;
        }
        Command::Serve { config } => {
            let config = ServiceConfig::load(config.as_deref())?;
            tracing_subscriber::fmt()
                .with_env_filter(
                    tracing_subscriber::EnvFilter::try_from_default_env()
                        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
                )
                .with_writer(std::io::stderr)
                .init();
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async {
                let service = Service::start(config)?;
                let listener = service.bind().await?;
                writeln!(stdout, "listening on http://{}", listener.local_addr()?)?;
                stdout.flush()?;
                service.serve(listener, shutdown_signal()).await?;
                anyhow::Ok(())
            })?;
        }
    }
    Ok(())
}

async fn shutdown_signal() {
    let ctrl_c = tokio::signal::ctrl_c();
    #[cfg(unix)]
    {
        let mut term = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate())
            .expect("install SIGTERM handler");
        tokio::select! {
            _ = ctrl_c => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    let _ = ctrl_c.await;
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}
