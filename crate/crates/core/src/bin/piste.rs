use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::mpsc;
use std::thread;

use clap::{Args, Parser, Subcommand, ValueEnum};

use piste::io::{self, FrameSequence};
use piste::reconstruction::{
    annotate_speed, compare_runs, replay, smooth, Engine, EngineConfig, OverlayStatus, Pairing,
    RunView, SpeedSeries,
};
use piste::render::{render_comparison, render_overlay, OverlayStyle};
use piste::synthetic::{measure_error, SceneConfig, SyntheticScene};
use piste::tracking::{load_track_file, track_csv, BBox, TrackTable};
use piste::{Error, Frame, Result};

/// Points inserted between consecutive trajectory points when drawing.
const SMOOTH_SAMPLES: usize = 8;
/// Frames decoded ahead of the engine.
const PREFETCH: usize = 4;

#[derive(Parser)]
#[command(name = "piste", version, about = "Reconstruct athlete trajectories from moving-camera footage")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track the athlete through a PNG sequence and rebuild the trajectory.
    Reconstruct(ReconstructArgs),
    /// Overlay another run's trajectory onto a reference run.
    Compare(CompareArgs),
    /// Render a synthetic scene with exact ground truth.
    Synth(SynthArgs),
    /// Score an exported trajectory against synthetic ground truth.
    Evaluate(EvaluateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Args)]
struct PipelineArgs {
    /// Static exclusion mask (non-zero pixels are ignored).
    #[arg(long, value_name = "PNG")]
    mask: Option<PathBuf>,
    /// Drop keypoints on bright, unsaturated texture.
    #[arg(long, value_enum, default_value = "off")]
    snow_filter: Switch,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("init").required(true).args(["init_bbox", "track_file"])))]
struct ReconstructArgs {
    #[arg(long, value_name = "DIR")]
    frames: PathBuf,
    /// Athlete box in frame 0.
    #[arg(long, value_name = "X,Y,W,H", value_parser = parse_bbox)]
    init_bbox: Option<BBox>,
    /// Per-frame boxes (`frame,x,y,w,h`) from an external tracker.
    #[arg(long, value_name = "CSV")]
    track_file: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Write overlay frames here.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "JSON_PATH")]
    export: Option<PathBuf>,
    /// Per-frame speeds (`frame,speed_mps`) to label the overlay with.
    #[arg(long, value_name = "CSV")]
    speed: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Reference run frames.
    #[arg(long, value_name = "DIR")]
    frames: PathBuf,
    /// Reference run export.
    #[arg(long, value_name = "JSON_PATH")]
    export: PathBuf,
    #[arg(long, value_name = "DIR")]
    other_frames: PathBuf,
    #[arg(long, value_name = "JSON_PATH")]
    other_export: PathBuf,
    /// `ref_frame,other_frame` rows; defaults to frame-by-frame.
    #[arg(long, value_name = "CSV")]
    pairing: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "CSV")]
    speed: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_name = "CONFIG")]
    scene: PathBuf,
    /// Receives `frames/`, `truth.json` and `track.csv`.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long, value_name = "JSON_PATH")]
    export: PathBuf,
    #[arg(long, value_name = "JSON_PATH")]
    truth: PathBuf,
}

fn parse_bbox(s: &str) -> std::result::Result<BBox, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match v[..] {
        [x, y, w, h] => Ok(BBox::new(x, y, w, h)),
        _ => Err(format!("expected X,Y,W,H, got {} values", v.len())),
    }
}

fn engine_config(p: &PipelineArgs, width: usize, height: usize) -> Result<EngineConfig> {
    let mut cfg = EngineConfig::with_seed(p.seed);
    cfg.snow.enabled = matches!(p.snow_filter, Switch::On);
    if let Some(path) = &p.mask {
        let mask = io::load_mask(path)?;
        if (mask.width(), mask.height()) != (width, height) {
            return Err(Error::DimensionMismatch {
                path: path.display().to_string(),
                want_w: width,
                want_h: height,
                got_w: mask.width(),
                got_h: mask.height(),
            });
        }
        cfg.static_mask = Some(mask);
    }
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display(), e))
}

fn frame_name(t: usize) -> String {
    format!("{t:05}.png")
}

/// Decodes frames on a helper thread, at most `PREFETCH` ahead, in order.
fn prefetch(seq: &FrameSequence) -> mpsc::Receiver<Result<Frame>> {
    let (tx, rx) = mpsc::sync_channel(PREFETCH);
    let seq = seq.clone();
    thread::spawn(move || {
        for t in 0..seq.len() {
            if tx.send(seq.load(t)).is_err() {
                break;
            }
        }
    });
    rx
}

fn reconstruct(args: ReconstructArgs) -> Result<()> {
    let seq = io::load_sequence(&args.frames)?;
    let cfg = engine_config(&args.pipeline, seq.width(), seq.height())?;
    let speeds = args.speed.as_ref().map(SpeedSeries::load).transpose()?;
    let table: Option<TrackTable> = args.track_file.as_ref().map(load_track_file).transpose()?;
    if let Some(out) = &args.out {
        create_dir(out)?;
    }
    let style = OverlayStyle::default();

    let frames = prefetch(&seq);
    let next = || -> Result<Frame> {
        frames
            .recv()
            .map_err(|_| Error::Config("frame reader stopped early".into()))?
    };
    let frame0 = next()?;
    let mut engine = match (args.init_bbox, table) {
        (Some(b0), _) => Engine::start(&frame0, b0, cfg)?,
        (None, Some(table)) => Engine::start_with_track(&frame0, table, cfg)?,
        (None, None) => unreachable!("clap requires one of the two"),
    };
    let write = |t: usize, frame: &Frame, engine: &Engine| -> Result<()> {
        let Some(out) = &args.out else { return Ok(()) };
        let traj = engine.trajectory();
        let labels = speeds.as_ref().map(|s| annotate_speed(traj, s));
        let img = render_overlay(frame, &smooth(traj, SMOOTH_SAMPLES), &style, labels.as_deref());
        io::save_frame(&img, out.join(frame_name(t)))
    };
    write(0, &frame0, &engine)?;
    for t in 1..seq.len() {
        let frame = next()?;
        engine.step(&frame)?;
        write(t, &frame, &engine)?;
    }

    if let Some(path) = &args.export {
        io::export_trajectory(engine.trajectory(), engine.diagnostics(), path)?;
    }
    let d = engine.diagnostics();
    println!(
        "frames={} bridged={} tracker_lost={} points={}",
        d.len(),
        d.iter().filter(|x| x.bridged).count(),
        d.iter().filter(|x| x.tracker_lost).count(),
        engine.trajectory().len()
    );
    Ok(())
}

fn compare(args: CompareArgs) -> Result<()> {
    let seq = io::load_sequence(&args.frames)?;
    let other_seq = io::load_sequence(&args.other_frames)?;
    let cfg = engine_config(&args.pipeline, seq.width(), seq.height())?;
    let reference = io::import_trajectory(&args.export)?;
    let other = io::import_trajectory(&args.other_export)?;
    let pairing = match &args.pairing {
        Some(p) => Pairing::load(p)?,
        None => Pairing::identity(seq.len()),
    };
    let speeds = args.speed.as_ref().map(SpeedSeries::load).transpose()?;

    let overlays = compare_runs(
        &cfg,
        RunView {
            frames: &seq,
            diagnostics: &reference.diagnostics,
        },
        RunView {
            frames: &other_seq,
            diagnostics: &other.diagnostics,
        },
        &pairing,
    )?;

    if let Some(out) = &args.out {
        create_dir(out)?;
        let ref_trajs = replay(&reference.diagnostics)?;
        let style = OverlayStyle::default();
        for o in &overlays {
            let frame = seq.load(o.ref_frame)?;
            let mine = &ref_trajs[o.ref_frame];
            let theirs = o.overlay.as_ref().map(|t| smooth(t, SMOOTH_SAMPLES)).unwrap_or_default();
            let labels = speeds.as_ref().map(|s| annotate_speed(mine, s));
            let img = render_comparison(&frame, &smooth(mine, SMOOTH_SAMPLES), &theirs, &style, labels.as_deref());
            io::save_frame(&img, out.join(frame_name(o.ref_frame)))?;
        }
    }
    let count = |s: OverlayStatus| overlays.iter().filter(|o| o.status == s).count();
    println!(
        "frames={} overlaid={} unpaired={} no_consensus={}",
        overlays.len(),
        count(OverlayStatus::Ok),
        count(OverlayStatus::Unpaired),
        count(OverlayStatus::NoConsensus)
    );
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let cfg = SceneConfig::load(&args.scene)?;
    let scene = SyntheticScene::new(cfg)?;
    let frames_dir = args.out.join("frames");
    create_dir(&frames_dir)?;
    for t in 0..scene.frame_count() {
        io::save_frame(&scene.render(t), frames_dir.join(frame_name(t)))?;
    }
    let truth = scene.truth();
    truth.save(args.out.join("truth.json"))?;
    let table = TrackTable::new(truth.boxes.iter().copied().enumerate().collect())?;
    let track = args.out.join("track.csv");
    fs::write(&track, track_csv(&table)).map_err(|e| Error::io(track.display(), e))?;
    println!("frames={} out={}", scene.frame_count(), args.out.display());
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let export = io::import_trajectory(&args.export)?;
    let truth = piste::synthetic::GroundTruth::load(&args.truth)?;
    let report = measure_error(&export.trajectory, &truth)?;
    println!("points={}", report.per_point.len());
    println!("mean_px={:.4}", report.mean);
    println!("max_px={:.4}", report.max);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Reconstruct(a) => reconstruct(a),
        Command::Compare(a) => compare(a),
        Command::Synth(a) => synth(a),
        Command::Evaluate(a) => evaluate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("piste: error: {}: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
