use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use room_layout::evaluation::{
    depth_error, rasterize, reprojection_iou, write_depth, DepthFormat, DepthMap, IouEntry,
};
use room_layout::extent::read_ply;
use room_layout::geometry::load_cameras;
use room_layout::pipeline::{
    reconstruct, registry_from_records, write_result, PipelineConfig, PipelineError, SceneBundle,
    TrackChoice,
};
use room_layout::synthetic::{generate, GtFrameRecord, NoiseModel, Preset, SynthConfig};

const EXIT_USAGE: u8 = 2;
const EXIT_VALIDATION: u8 = 3;
const EXIT_RUNTIME: u8 = 4;
const EXIT_REJECTED: u8 = 5;

#[derive(Parser)]
#[command(
    name = "room-layout",
    version,
    about = "3D room layouts from annotated video frames"
)]
struct Cli {
    /// Log level filter (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reconstruct a scene directory into a mesh and a report.
    Reconstruct(ReconstructArgs),
    /// Score an existing mesh against a scene's annotations.
    Evaluate(EvaluateArgs),
    /// Render a mesh into label and depth images.
    Render(RenderArgs),
    /// Generate a synthetic scene directory.
    Synth(SynthArgs),
}

#[derive(Args)]
struct ReconstructArgs {
    /// Scene directory with cameras.json and annotations.json.
    #[arg(long)]
    scene: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// JSON pipeline configuration; flags given here take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of seeded runs.
    #[arg(long)]
    runs: Option<usize>,
    /// Seed of the first run; run i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    /// Concurrent runs; 0 uses every core.
    #[arg(long)]
    jobs: Option<usize>,
    /// Minimum IoU for the best run to be accepted.
    #[arg(long)]
    iou_threshold: Option<f64>,
    #[arg(long)]
    alpha_edge: Option<f64>,
    #[arg(long)]
    alpha_perp: Option<f64>,
    /// Weight of the track term.
    #[arg(long)]
    track_weight: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    plateau_decays: Option<usize>,
    /// Mean spacing of sampled points, pixels.
    #[arg(long)]
    sample_spacing: Option<f64>,
    /// How far a sample may snap to a file track, pixels.
    #[arg(long)]
    track_radius: Option<f64>,
    /// Track file to use instead of the scene's tracks.json.
    #[arg(long, conflicts_with = "oracle")]
    tracks: Option<PathBuf>,
    /// Track with the ground-truth oracle (synthetic scenes only).
    #[arg(long)]
    oracle: bool,
    /// Depth map format to look for in depth/.
    #[arg(long, value_enum)]
    depth_format: Option<DepthFormat>,
    /// IoU rendering resolution as WIDTHxHEIGHT.
    #[arg(long, value_parser = parse_size)]
    render_size: Option<(usize, usize)>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Mesh in PLY format.
    #[arg(long)]
    mesh: PathBuf,
    /// Element map; defaults to elements.json next to the mesh.
    #[arg(long)]
    elements: Option<PathBuf>,
    /// Write metrics here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    depth_format: Option<DepthFormat>,
    #[arg(long, value_parser = parse_size)]
    render_size: Option<(usize, usize)>,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long)]
    cameras: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Image size as WIDTHxHEIGHT.
    #[arg(long, value_parser = parse_size)]
    size: (usize, usize),
    #[arg(long, value_enum, default_value = "png-mm")]
    depth_format: DepthFormat,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    preset: Preset,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Track noise standard deviation, pixels.
    #[arg(long, default_value_t = 0.0)]
    noise_px: f64,
    /// Annotation vertex jitter, pixels; defaults to twice the track noise.
    #[arg(long)]
    jitter_px: Option<f64>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    annotate_every: Option<usize>,
    #[arg(long)]
    width: Option<u32>,
    #[arg(long)]
    height: Option<u32>,
    /// Spacing of the points written to tracks.json; 0 skips the file.
    #[arg(long, default_value_t = 10.0)]
    track_spacing: f64,
    #[arg(long, value_enum, default_value = "png-mm")]
    depth_format: DepthFormat,
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WIDTHxHEIGHT, got {s:?}"))?;
    let w: usize = w
        .trim()
        .parse()
        .map_err(|_| format!("bad width in {s:?}"))?;
    let h: usize = h
        .trim()
        .parse()
        .map_err(|_| format!("bad height in {s:?}"))?;
    if w == 0 || h == 0 {
        return Err("size must be positive".into());
    }
    Ok((w, h))
}

/// A failure mapped to the process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn validation(message: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_VALIDATION,
            message: message.to_string(),
        }
    }

    fn runtime(message: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: message.to_string(),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        if e.is_validation() {
            Self::validation(e)
        } else {
            Self::runtime(e)
        }
    }
}

fn pipeline_config(args: &ReconstructArgs) -> Result<PipelineConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(v) = args.alpha_edge {
        cfg.solver.alpha_edge = v;
    }
    if let Some(v) = args.alpha_perp {
        cfg.solver.alpha_perp = v;
    }
    if let Some(v) = args.track_weight {
        cfg.solver.track_weight = v;
    }
    if let Some(v) = args.learning_rate {
        cfg.solver.learning_rate = v;
    }
    if let Some(v) = args.max_iterations {
        cfg.solver.max_iterations = v;
    }
    if let Some(v) = args.patience {
        cfg.solver.patience = v;
    }
    if let Some(v) = args.plateau_decays {
        cfg.solver.plateau_decays = v;
    }
    if let Some(v) = args.runs {
        cfg.qc.runs = v;
    }
    if let Some(v) = args.iou_threshold {
        cfg.qc.iou_threshold = v;
    }
    if let Some(v) = args.seed {
        cfg.base_seed = v;
    }
    if let Some(v) = args.jobs {
        cfg.jobs = v;
    }
    if let Some(v) = args.sample_spacing {
        cfg.sample_spacing = v;
    }
    if let Some(v) = args.track_radius {
        cfg.track_radius = v;
    }
    if args.render_size.is_some() {
        cfg.render_size = args.render_size;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run_reconstruct(args: ReconstructArgs) -> Result<u8, Failure> {
    let cfg = pipeline_config(&args)?;
    let choice = match (&args.tracks, args.oracle) {
        (Some(p), _) => TrackChoice::File(p.clone()),
        (None, true) => TrackChoice::Oracle,
        (None, false) => TrackChoice::Auto,
    };
    let scene = SceneBundle::load_with(&args.scene, args.depth_format, &choice)?;
    for w in &scene.warnings {
        log::warn!("{w}");
    }
    let result = reconstruct(&scene, &cfg)?;
    write_result(&args.out, &scene, &result)?;
    let best = result.best_record();
    let depth = best
        .depth_error
        .map_or_else(|| "n/a".to_string(), |e| format!("{e:.4} m"));
    println!(
        "{}: best run {} of {} (seed {}), IoU {:.4}, depth error {depth}, {}",
        scene.id,
        result.report.decision.best_index,
        result.report.runs.len(),
        best.seed,
        best.iou,
        if result.accepted() {
            "accepted"
        } else {
            "rejected"
        }
    );
    Ok(if result.accepted() { 0 } else { EXIT_REJECTED })
}

#[derive(Serialize)]
struct Metrics {
    iou: f64,
    frame_weighted_iou: f64,
    depth_error: Option<f64>,
    entries: Vec<IouEntry>,
}

fn read_mesh(path: &Path) -> Result<room_layout::extent::LayoutMesh, Failure> {
    let file = std::fs::File::open(path)
        .map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?;
    read_ply(BufReader::new(file))
        .map_err(|e| Failure::validation(format!("{}: {e}", path.display())))
}

fn run_evaluate(args: EvaluateArgs) -> Result<u8, Failure> {
    let scene = SceneBundle::load_with(&args.scene, args.depth_format, &TrackChoice::Ignore)?;
    let mesh = read_mesh(&args.mesh)?;
    let elements = args
        .elements
        .clone()
        .unwrap_or_else(|| args.mesh.with_file_name("elements.json"));
    let text = std::fs::read_to_string(&elements)
        .map_err(|e| Failure::validation(format!("{}: {e}", elements.display())))?;
    let records: Vec<GtFrameRecord> = serde_json::from_str(&text)
        .map_err(|e| Failure::validation(format!("{}: {e}", elements.display())))?;
    let registry = registry_from_records(&scene, &records)?;
    let iou = reprojection_iou(
        &mesh,
        &scene.frames,
        &registry,
        &scene.cameras,
        args.render_size,
    )
    .map_err(Failure::runtime)?;
    let depth = if scene.depth.is_empty() {
        None
    } else {
        Some(
            depth_error(&mesh, &scene.frames, &scene.cameras, &scene.depth)
                .map_err(Failure::runtime)?,
        )
    };
    let metrics = Metrics {
        iou: iou.mean,
        frame_weighted_iou: iou.frame_weighted_mean,
        depth_error: depth,
        entries: iou.entries,
    };
    let mut text = serde_json::to_string_pretty(&metrics).map_err(Failure::runtime)?;
    text.push('\n');
    match &args.out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?,
        None => print!("{text}"),
    }
    Ok(0)
}

fn run_render(args: RenderArgs) -> Result<u8, Failure> {
    let mesh = read_mesh(&args.mesh)?;
    let cameras = load_cameras(&args.cameras)
        .map_err(|e| Failure::validation(format!("{}: {e}", args.cameras.display())))?;
    let (w, h) = args.size;
    let labels_dir = args.out.join("labels");
    let depth_dir = args.out.join("depth");
    for dir in [&labels_dir, &depth_dir] {
        std::fs::create_dir_all(dir)
            .map_err(|e| Failure::runtime(format!("{}: {e}", dir.display())))?;
    }
    for cam in &cameras {
        let img = rasterize(&mesh, cam, w, h);
        // 0 is background, element k is stored as k + 1
        let pixels: Vec<u16> = img
            .label
            .iter()
            .map(|l| l.map_or(0, |id| (id.0 + 1).min(u16::MAX as u32) as u16))
            .collect();
        let label = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(w as u32, h as u32, pixels)
            .expect("buffer matches size");
        let path = labels_dir.join(format!("{:06}.png", cam.frame_index));
        label
            .save(&path)
            .map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;
        let depth = DepthMap {
            width: w,
            height: h,
            data: img
                .depth
                .iter()
                .map(|d| if d.is_finite() { *d as f32 } else { 0.0 })
                .collect(),
        };
        let path = depth_dir.join(format!(
            "{:06}.{}",
            cam.frame_index,
            args.depth_format.extension()
        ));
        write_depth(&path, args.depth_format, &depth).map_err(Failure::runtime)?;
    }
    println!(
        "rendered {} frames into {}",
        cameras.len(),
        args.out.display()
    );
    Ok(0)
}

fn run_synth(args: SynthArgs) -> Result<u8, Failure> {
    let defaults = SynthConfig::default();
    if !(args.noise_px >= 0.0 && args.noise_px.is_finite())
        || args.jitter_px.is_some_and(|j| !(j >= 0.0 && j.is_finite()))
    {
        return Err(Failure::validation("noise must be finite and non-negative"));
    }
    let cfg = SynthConfig {
        preset: args.preset,
        seed: args.seed,
        noise: NoiseModel {
            track_px: args.noise_px,
            jitter_px: args.jitter_px.unwrap_or(2.0 * args.noise_px),
        },
        frames: args.frames.unwrap_or(defaults.frames),
        annotate_every: args.annotate_every.unwrap_or(defaults.annotate_every),
        width: args.width.unwrap_or(defaults.width),
        height: args.height.unwrap_or(defaults.height),
        ..defaults
    };
    let scene = generate(&cfg).map_err(Failure::validation)?;
    let spacing = (args.track_spacing > 0.0).then_some(args.track_spacing);
    scene
        .write(&args.out, spacing, Some(args.depth_format))
        .map_err(Failure::runtime)?;
    println!(
        "wrote {:?} scene (seed {}) with {} cameras and {} annotated frames to {}",
        cfg.preset,
        cfg.seed,
        scene.cameras.len(),
        scene.annotations.len(),
        args.out.display()
    );
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    env_logger::Builder::new().parse_filters(&cli.log).init();
    let outcome = match cli.command {
        Command::Reconstruct(a) => run_reconstruct(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::Render(a) => run_render(a),
        Command::Synth(a) => run_synth(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
