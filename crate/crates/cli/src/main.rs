//! Command line front end: scene generation, segmentation, discovery,
//! evaluation, surprise scoring, paired plausibility experiments and loss
//! reporting.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cubetrack::camera::Camera;
use cubetrack::error::{Error, Result};
use cubetrack::frame::Frame;
use cubetrack::metrics::{
    aggregate_frames, align_and_correlate, iou3d, score_frame, score_tracked, CorrelationReport,
    DEFAULT_IOU3D_SAMPLES, RECALL3D_IOU,
};
use cubetrack::pipeline::{
    eval_loss, run_discover, run_pair_experiment, PipelineConfig, SegmenterKind, TrackSource,
};
use cubetrack::plot::save_line_plot;
use cubetrack::segment::classical_segment;
use cubetrack::surprise::surprise_curve;
use cubetrack::synth;
use cubetrack::track::load_tracks;

#[derive(Parser)]
#[command(
    name = "cubetrack",
    version,
    about = "Discover, track and physically validate 3D cuboid objects in videos"
)]
struct Cli {
    /// Print the default configuration file and exit.
    #[arg(long)]
    emit_default_config: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Decompose the whole image at once instead of 64 merged windows.
    #[arg(long)]
    single_scale: bool,
    /// Disable the physics likelihood (association re-ranking, surprise).
    #[arg(long)]
    no_physics: bool,
}

impl ConfigArgs {
    fn load(&self) -> Result<PipelineConfig> {
        let mut config = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if self.single_scale {
            config.patchwork.multi_scale = false;
        }
        if self.no_physics {
            config.dynamics.physics = false;
        }
        Ok(config)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Fully sampled objects and occluders.
    Random,
    /// One object larger than a patch plus one small object.
    LargeSmall,
    /// Two objects whose projections cross mid-scene.
    Occlusion,
    /// Wall-and-mover pairs; implausible twin teleports across the wall.
    PairTeleport,
    /// Open-field pairs; implausible twin vanishes mid-scene.
    PairDisappear,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic scenes with ground truth.
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        scenes: usize,
        #[arg(long, default_value_t = 24)]
        frames: usize,
        /// Image edge length in pixels (must be divisible by 8).
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 2)]
        objects: usize,
        #[arg(long, default_value_t = 0)]
        occluders: usize,
        #[arg(long, value_enum, default_value_t = Preset::Random)]
        preset: Preset,
    },
    /// Decompose one image into per-slot masks.
    Segment {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Discover and track objects in a scene directory.
    Discover {
        /// Directory with frame_<n>.png and camera.json.
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Score predicted tracks against a scene's ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write a per-frame CSV next to the report.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Include the affine-aligned translation correlation.
        #[arg(long)]
        correlate: bool,
    },
    /// Surprise curve for a set of tracks.
    Surprise {
        #[arg(long)]
        tracks: PathBuf,
        /// Scene directory providing camera.json and occluder metadata.
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out_csv: PathBuf,
        #[arg(long)]
        out_png: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Relative accuracy over paired plausible/implausible scenes.
    PairExp {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Use ground-truth tracks instead of running discovery.
        #[arg(long)]
        oracle: bool,
        /// Use the scenes' ground-truth masks through full discovery.
        #[arg(long)]
        oracle_masks: bool,
        /// Write per-pair curve CSVs and plots here.
        #[arg(long)]
        curves: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Report all loss terms over a scene.
    EvalLoss {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.emit_default_config {
        print!("{}", PipelineConfig::default_toml());
        return ExitCode::SUCCESS;
    }
    let Some(command) = cli.command else {
        eprintln!("error: no subcommand; try --help");
        return ExitCode::from(2);
    };
    match run(command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Gen {
            out,
            seed,
            scenes,
            frames,
            size,
            objects,
            occluders,
            preset,
        } => gen(out, seed, scenes, frames, size, objects, occluders, preset),
        Command::Segment { image, out, config } => segment(&image, &out, &config.load()?),
        Command::Discover { scene, out, config } => {
            let result = run_discover(&scene, &out, &config.load()?)?;
            println!(
                "discovered {} tracks over {} frames (alpha = {:.3})",
                result.report.tracks, result.report.frames, result.report.alpha
            );
            Ok(())
        }
        Command::Eval {
            pred,
            scene,
            out,
            csv,
            correlate,
        } => eval(&pred, &scene, &out, csv.as_deref(), correlate),
        Command::Surprise {
            tracks,
            scene,
            out_csv,
            out_png,
            config,
        } => surprise_cmd(&tracks, &scene, &out_csv, &out_png, &config.load()?),
        Command::PairExp {
            dataset,
            out,
            oracle,
            oracle_masks,
            curves,
            config,
        } => {
            let mut cfg = config.load()?;
            let source = if oracle {
                TrackSource::GroundTruth
            } else {
                if oracle_masks {
                    cfg.segmenter.kind = SegmenterKind::External;
                    cfg.segmenter.external_mask_dir = None; // per-scene masks/
                }
                TrackSource::Discover
            };
            let experiment = run_pair_experiment(&dataset, &cfg, source)?;
            if let Some(dir) = curves {
                std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                for (plausible, implausible) in &experiment.curves {
                    for curve in [plausible, implausible] {
                        curve.save_csv(&dir.join(format!("{}.csv", curve.video_id)))?;
                        save_line_plot(
                            &curve.values,
                            None,
                            &dir.join(format!("{}.png", curve.video_id)),
                        )?;
                    }
                }
            }
            println!(
                "relative accuracy {:.3} over {} pairs",
                experiment.report.relative_accuracy,
                experiment.report.pairs.len()
            );
            write_json(&experiment.report, &out)
        }
        Command::EvalLoss { scene, out, config } => {
            let report = eval_loss(&scene, &config.load()?)?;
            println!(
                "image {:.3}  kl {:.3}  physics {:.3}",
                report.image_loss, report.kl_loss, report.physics_loss
            );
            write_json(&report, &out)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn gen(
    out: PathBuf,
    seed: u64,
    scenes: usize,
    frames: usize,
    size: usize,
    objects: usize,
    occluders: usize,
    preset: Preset,
) -> Result<()> {
    let camera = Camera::identity_pose(size as f64, size, size);
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    for i in 0..scenes {
        let scene_seed = seed.wrapping_add(i as u64);
        match preset {
            Preset::Random => {
                let cfg =
                    synth::random_config(scene_seed, objects, occluders, frames, camera.clone());
                let record = synth::generate(&cfg)?;
                synth::save_scene(&record, &out.join(format!("scene_{i:04}")))?;
            }
            Preset::LargeSmall => {
                let cfg = synth::large_small_config(scene_seed, frames, camera.clone());
                let record = synth::generate(&cfg)?;
                synth::save_scene(&record, &out.join(format!("scene_{i:04}")))?;
            }
            Preset::Occlusion => {
                let cfg = synth::occlusion_crossing_config(scene_seed, frames, camera.clone());
                let record = synth::generate(&cfg)?;
                synth::save_scene(&record, &out.join(format!("scene_{i:04}")))?;
            }
            Preset::PairTeleport => {
                let (cfg, violation) = synth::block_task_config(scene_seed, frames, camera.clone());
                let (plausible, implausible) = synth::generate_pair(&cfg, &violation)?;
                synth::save_scene(&plausible, &out.join(format!("pair_{i:04}_plausible")))?;
                synth::save_scene(&implausible, &out.join(format!("pair_{i:04}_implausible")))?;
            }
            Preset::PairDisappear => {
                let (cfg, violation) = synth::disappear_config(scene_seed, frames, camera.clone());
                let (plausible, implausible) = synth::generate_pair(&cfg, &violation)?;
                synth::save_scene(&plausible, &out.join(format!("pair_{i:04}_plausible")))?;
                synth::save_scene(&implausible, &out.join(format!("pair_{i:04}_implausible")))?;
            }
        }
    }
    println!("wrote {scenes} scene(s) under {}", out.display());
    Ok(())
}

#[derive(serde::Serialize)]
struct SegmentManifestEntry {
    slot: usize,
    file: String,
    area_px: usize,
    background: bool,
}

fn segment(image_path: &Path, out: &Path, config: &PipelineConfig) -> Result<()> {
    let image = Frame::load_png(0, image_path)?;
    let decomposition = classical_segment(&image, config.segmenter.slots)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut manifest = Vec::new();
    for (slot, mask) in decomposition.masks.iter().enumerate() {
        let file = format!("slot_{slot}.png");
        mask.save_png(&out.join(&file))?;
        manifest.push(SegmentManifestEntry {
            slot,
            file,
            area_px: mask.count_above(0.5),
            background: slot == 0,
        });
    }
    write_json(&manifest, &out.join("manifest.json"))?;
    println!("wrote {} slots under {}", manifest.len(), out.display());
    Ok(())
}

#[derive(serde::Serialize)]
struct EvalReport {
    /// Per-frame best-IoU matching (predictions reusable).
    mask_mean_iou: f64,
    mask_detection_rate: f64,
    /// Track-consistent matching (one predicted track per ground truth).
    tracked_mean_iou: f64,
    tracked_detection_rate: f64,
    mean_iou3d: f64,
    recall3d: f64,
    /// 3D metrics after mapping predicted translations through the fitted
    /// affine alignment. Present with `--correlate`.
    aligned_mean_iou3d: Option<f64>,
    aligned_recall3d: Option<f64>,
    correlation: Option<CorrelationReport>,
}

fn three_d_scores(
    pred: &[cubetrack::ObjectTrack],
    gt: &[cubetrack::ObjectTrack],
    last_frame: usize,
    transform: Option<&cubetrack::metrics::AffineTransform>,
) -> (f64, f64) {
    let mut values: Vec<f64> = Vec::new();
    let mut recalled = 0usize;
    for f in 0..=last_frame {
        let gt_states: Vec<_> = gt.iter().filter_map(|t| t.state_at(f)).collect();
        let pred_cuboids: Vec<_> = pred
            .iter()
            .filter_map(|t| t.state_at(f))
            .map(|s| {
                let mut c = s.cuboid;
                if let Some(t) = transform {
                    c.translation = t.apply(&c.translation);
                }
                c
            })
            .collect();
        for g in &gt_states {
            let best = pred_cuboids
                .iter()
                .map(|p| iou3d(p, &g.cuboid, DEFAULT_IOU3D_SAMPLES))
                .fold(0.0f64, f64::max);
            if best > RECALL3D_IOU {
                recalled += 1;
            }
            values.push(best);
        }
    }
    let n = values.len().max(1) as f64;
    (values.iter().sum::<f64>() / n, recalled as f64 / n)
}

fn eval(
    pred_path: &Path,
    scene: &Path,
    out: &Path,
    csv: Option<&Path>,
    correlate: bool,
) -> Result<()> {
    let pred = load_tracks(pred_path)?;
    let gt = load_tracks(&scene.join("gt.jsonl"))?;
    let last_frame = gt
        .iter()
        .filter_map(|t| t.states().last().map(|s| s.frame))
        .max()
        .ok_or(Error::EmptyReport("ground truth has no states"))?;

    let mut frames = Vec::new();
    for f in 0..=last_frame {
        let gt_masks: Vec<_> = gt.iter().filter_map(|t| t.state_at(f)).collect();
        if gt_masks.is_empty() {
            continue;
        }
        let pred_masks: Vec<_> = pred
            .iter()
            .filter_map(|t| t.state_at(f))
            .map(|s| s.mask.clone())
            .collect();
        let gt_mask_list: Vec<_> = gt_masks.iter().map(|s| s.mask.clone()).collect();
        frames.push(score_frame(f, &pred_masks, &gt_mask_list)?);
    }
    let mask_report = aggregate_frames(frames)?;
    let tracked = score_tracked(&pred, &gt)?;
    let (mean_iou3d, recall) = three_d_scores(&pred, &gt, last_frame, None);
    let (correlation, aligned) = if correlate {
        let (transform, report) = align_and_correlate(&pred, &gt)?;
        let aligned = three_d_scores(&pred, &gt, last_frame, Some(&transform));
        (Some(report), Some(aligned))
    } else {
        (None, None)
    };
    let report = EvalReport {
        mask_mean_iou: mask_report.mean_iou,
        mask_detection_rate: mask_report.detection_rate,
        tracked_mean_iou: tracked.mean_iou,
        tracked_detection_rate: tracked.detection_rate,
        mean_iou3d,
        recall3d: recall,
        aligned_mean_iou3d: aligned.map(|a| a.0),
        aligned_recall3d: aligned.map(|a| a.1),
        correlation,
    };
    println!(
        "mask IoU {:.3}  detection {:.3}  3D IoU {:.3}  3D recall {:.3}",
        report.mask_mean_iou, report.mask_detection_rate, report.mean_iou3d, report.recall3d
    );
    if let Some(csv_path) = csv {
        let mut text = String::from("frame,mean_iou,detection_rate\n");
        for frame in &mask_report.frames {
            text.push_str(&format!(
                "{},{},{}\n",
                frame.frame, frame.mean_iou, frame.detection_rate
            ));
        }
        std::fs::write(csv_path, text).map_err(|e| Error::io(csv_path, e))?;
    }
    write_json(&report, out)
}

fn surprise_cmd(
    tracks_path: &Path,
    scene: &Path,
    out_csv: &Path,
    out_png: &Path,
    config: &PipelineConfig,
) -> Result<()> {
    let tracks = load_tracks(tracks_path)?;
    let camera = Camera::load_json(&scene.join("camera.json"))?;
    let meta = synth::load_meta(scene).ok();
    let occluders = meta
        .as_ref()
        .map(|m| m.occluders.clone())
        .unwrap_or_default();
    let n_frames = meta.as_ref().map(|m| m.frames);
    let violation = meta.as_ref().and_then(|m| m.violation_frame);
    let curve = surprise_curve(
        &tracks,
        &occluders,
        &camera,
        &config.dynamics.params(),
        &config.surprise.options(),
        n_frames,
        tracks_path.display().to_string(),
    )?;
    curve.save_csv(out_csv)?;
    save_line_plot(&curve.values, violation, out_png)?;
    println!(
        "surprise max {:.3} at frame {}",
        curve.max(),
        curve.argmax()
    );
    Ok(())
}
