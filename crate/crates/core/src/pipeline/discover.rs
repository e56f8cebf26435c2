//! The discovery pipeline: per frame, segment (whole-image or multi-scale
//! with merging), backproject every object mask to a cuboid, and associate
//! observations to tracks greedily by mask IoU, with the physics
//! likelihood re-ranking ambiguous candidates when enabled.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::camera::Camera;
use crate::cuboid::Cuboid;
use crate::dynamics::predict_cuboid_steps;
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::geometry::{
    backproject_manual, calibrate_alpha, normalized_bottom_bound, render_all, soft_bounds,
};
use crate::mask::Mask;
use crate::metrics::iou2d;
use crate::patchwork::{make_layout, merge_segments, scaled_overlap_threshold, WindowSegments};
use crate::pipeline::config::{PipelineConfig, SegmenterKind};
use crate::segment::classical_segment;
use crate::track::{load_tracks, save_tracks, ObjectTrack};

#[derive(Debug, Clone, Serialize)]
pub struct DiscoverReport {
    pub frames: usize,
    pub tracks: usize,
    pub objects_per_frame: Vec<usize>,
    pub alpha: f64,
}

#[derive(Debug)]
pub struct DiscoverResult {
    pub tracks: Vec<ObjectTrack>,
    pub report: DiscoverReport,
}

/// Lists `frame_<n>.png` files in order.
fn list_frames(dir: &Path) -> Result<Vec<(usize, PathBuf)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut frames = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(number) = name
            .strip_prefix("frame_")
            .and_then(|rest| rest.strip_suffix(".png"))
        {
            if let Ok(index) = number.parse::<usize>() {
                frames.push((index, entry.path()));
            }
        }
    }
    frames.sort();
    if frames.is_empty() {
        return Err(Error::format(dir, "no frame_<n>.png files found"));
    }
    Ok(frames)
}

/// External masks for one frame: `mask_f<frame>_*.png` under `dir`,
/// ordered by file name.
fn external_masks(dir: &Path, frame: usize) -> Result<Vec<Mask>> {
    let prefix = format!("mask_f{frame:04}_");
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut named: Vec<(String, PathBuf)> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.starts_with(&prefix) && name.ends_with(".png") {
            named.push((name, entry.path()));
        }
    }
    named.sort();
    named.into_iter().map(|(_, p)| Mask::load_png(&p)).collect()
}

/// Produces this frame's object masks (hard, full resolution) according to
/// the configured segmenter and scale mode.
fn segment_frame(image: &Frame, config: &PipelineConfig) -> Result<Vec<Mask>> {
    match config.segmenter.kind {
        SegmenterKind::External => {
            let dir = config
                .segmenter
                .external_mask_dir
                .as_ref()
                .expect("validated");
            Ok(external_masks(dir, image.index)?
                .into_iter()
                .map(|m| m.binarize(config.patchwork.bin_threshold))
                .collect())
        }
        SegmenterKind::Classical => {
            let slots = config.segmenter.slots;
            if !config.patchwork.multi_scale {
                let decomposition = classical_segment(image, slots)?;
                return Ok(decomposition
                    .object_masks()
                    .iter()
                    .filter(|m| m.total_weight() > 0.0)
                    .map(|m| m.binarize(config.patchwork.bin_threshold))
                    .collect());
            }
            let layout = make_layout(image.height(), image.width())?;
            let mut per_window = Vec::with_capacity(layout.windows.len());
            for (wi, window) in layout.windows.iter().enumerate() {
                let patch = image.crop(window.x0, window.y0, window.width, window.height);
                let decomposition = classical_segment(&patch, slots)?;
                let masks: Vec<Mask> = decomposition
                    .object_masks()
                    .iter()
                    .filter(|m| m.total_weight() > 0.0)
                    .map(|m| m.lift(image.width(), image.height(), window.x0, window.y0))
                    .collect();
                per_window.push(WindowSegments {
                    window_index: wi,
                    masks,
                });
            }
            let threshold = scaled_overlap_threshold(
                config.patchwork.overlap_threshold,
                image.width(),
                image.height(),
            );
            let global = merge_segments(&per_window, threshold, config.patchwork.bin_threshold)?;
            Ok(global.objects.into_iter().map(|o| o.mask).collect())
        }
    }
}

/// One observed object in the current frame.
struct Observation {
    mask: Mask,
    cuboid: Cuboid,
}

/// Per-channel median of the outermost pixel ring: the global background
/// color for uniform-background footage.
fn border_color(image: &Frame) -> [f64; 3] {
    let (w, h) = (image.width(), image.height());
    let mut channels: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut push = |p: [f64; 3]| {
        for c in 0..3 {
            channels[c].push(p[c]);
        }
    };
    for x in 0..w {
        push(image.get(x, 0));
        push(image.get(x, h - 1));
    }
    for y in 1..h.saturating_sub(1) {
        push(image.get(0, y));
        push(image.get(w - 1, y));
    }
    let mut out = [0.0; 3];
    for c in 0..3 {
        channels[c].sort_by(|a, b| a.partial_cmp(b).expect("finite channel"));
        out[c] = channels[c][channels[c].len() / 2];
    }
    out
}

/// Mean image color over the mask's support.
fn masked_mean_color(image: &Frame, mask: &Mask) -> [f64; 3] {
    let mut sum = [0.0f64; 3];
    let mut n = 0usize;
    for y in 0..image.height() {
        for x in 0..image.width() {
            if mask.get(x, y) > 0.5 {
                let p = image.get(x, y);
                for c in 0..3 {
                    sum[c] += p[c];
                }
                n += 1;
            }
        }
    }
    if n == 0 {
        return [0.0; 3];
    }
    [sum[0] / n as f64, sum[1] / n as f64, sum[2] / n as f64]
}

fn color_distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Discovery over a scene directory (ordered `frame_<n>.png` plus
/// `camera.json`). Does not write anything; see [`run_discover`] for the
/// persisting front end.
pub fn discover_scene(scene_dir: &Path, config: &PipelineConfig) -> Result<DiscoverResult> {
    config.validate()?;
    let camera_path = match &config.camera_file {
        Some(path) => path.clone(),
        None => scene_dir.join("camera.json"),
    };
    let camera = Camera::load_json(&camera_path)?;
    let frames = list_frames(scene_dir)?;

    // Depth-slope calibration from ground truth when available.
    let mut alpha = config.backprojection.alpha;
    if config.backprojection.alpha_auto {
        let gt_path = scene_dir.join("gt.jsonl");
        if gt_path.exists() {
            if let Ok(gt_tracks) = load_tracks(&gt_path) {
                let mut samples = Vec::new();
                for track in &gt_tracks {
                    for state in track.states() {
                        if let Ok((_, _, _, y_max)) = soft_bounds(
                            &state.mask,
                            config
                                .backprojection
                                .effective_boundary_count(camera.width()),
                        ) {
                            samples.push((
                                normalized_bottom_bound(y_max, camera.height()),
                                camera.world_to_camera(&state.cuboid.translation).z,
                            ));
                        }
                    }
                }
                if let Ok(fitted) = calibrate_alpha(&samples) {
                    alpha = fitted;
                }
            }
        }
    }
    let backprojection = config.backprojection.to_config(alpha, camera.width());
    let params = config.dynamics.params();
    let physics = config.dynamics.physics;

    let mut tracks: Vec<ObjectTrack> = Vec::new();
    let mut last_frame_of: Vec<usize> = Vec::new();
    let mut next_track_id = 0usize;
    let mut objects_per_frame = Vec::with_capacity(frames.len());

    for (frame_index, path) in &frames {
        let image = Frame::load_png(*frame_index, path)?;
        let masks = segment_frame(&image, config)?;

        // Backproject every sufficiently large mask; degenerate slivers
        // and background-colored leftovers are dropped.
        let background = config
            .association
            .background_filter
            .then(|| border_color(&image));
        let mut observations: Vec<Observation> = Vec::new();
        for mask in masks {
            if (mask.count_above(0.5) as f64) < config.association.min_object_px {
                continue;
            }
            if let Some(bg) = background {
                let mean = masked_mean_color(&image, &mask);
                if color_distance(mean, bg) <= config.association.background_tolerance {
                    continue;
                }
            }
            match backproject_manual(&mask, &camera, &backprojection) {
                Ok(cuboid) => observations.push(Observation { mask, cuboid }),
                Err(Error::DegenerateExtent(_)) | Err(Error::EmptyMask(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        objects_per_frame.push(observations.len());

        // Physics predictions per track, rendered together so expected
        // occlusions show up in the predicted masks.
        let mut predicted: Vec<Option<(Cuboid, Mask)>> = vec![None; tracks.len()];
        if physics && !tracks.is_empty() {
            let mut cuboids = Vec::new();
            let mut slots: Vec<Option<usize>> = Vec::with_capacity(tracks.len());
            for (ti, track) in tracks.iter().enumerate() {
                let gap = frame_index.saturating_sub(last_frame_of[ti]);
                match predict_cuboid_steps(track, &params, gap.max(1)) {
                    Ok(c) => {
                        slots.push(Some(cuboids.len()));
                        cuboids.push(c);
                    }
                    Err(_) => {
                        slots.push(None);
                        if let Some(s) = track.last_state() {
                            cuboids.push(s.cuboid);
                        }
                    }
                }
            }
            if !cuboids.is_empty() {
                let rendered = render_all(&cuboids, &camera)?;
                for (ti, slot) in slots.iter().enumerate() {
                    if let Some(si) = slot {
                        predicted[ti] = Some((cuboids[*si], rendered[*si].clone()));
                    }
                }
            }
        }

        // Candidate tracks per observation, by IoU against the track's
        // last mask. With physics on, the occlusion-aware predicted mask
        // is a second gate: an object re-emerging from behind another can
        // rejoin its track through the prediction even though its last
        // visible mask is stale.
        let mut candidates: Vec<Vec<(usize, f64)>> = Vec::with_capacity(observations.len());
        for obs in &observations {
            let mut list = Vec::new();
            for (ti, track) in tracks.iter().enumerate() {
                let last = track.last_state().expect("tracks are never empty");
                let mut iou = iou2d(&obs.mask, &last.mask)?;
                if physics {
                    if let Some((_, pm)) = &predicted[ti] {
                        iou = iou.max(iou2d(&obs.mask, pm)?);
                    }
                }
                if iou > config.association.iou_threshold {
                    list.push((ti, iou));
                }
            }
            list.sort_by(|a, b| {
                b.1.partial_cmp(&a.1)
                    .expect("finite iou")
                    .then(a.0.cmp(&b.0))
            });
            candidates.push(list);
        }

        // Greedy assignment, strongest observations first. With physics,
        // an observation with several candidates picks the track whose
        // prediction explains it best instead of the biggest overlap.
        let mut order: Vec<usize> = (0..observations.len()).collect();
        order.sort_by(|&a, &b| {
            let ba = candidates[a].first().map(|c| c.1).unwrap_or(0.0);
            let bb = candidates[b].first().map(|c| c.1).unwrap_or(0.0);
            bb.partial_cmp(&ba).expect("finite iou").then(a.cmp(&b))
        });
        let mut taken = vec![false; tracks.len()];
        let mut assignment: Vec<Option<usize>> = vec![None; observations.len()];
        for &oi in &order {
            let open: Vec<&(usize, f64)> = candidates[oi]
                .iter()
                .filter(|(ti, _)| !taken[*ti])
                .collect();
            if open.is_empty() {
                continue;
            }
            let chosen = if physics && open.len() > 1 {
                let obs = &observations[oi];
                let mut best: Option<(f64, usize)> = None;
                for (ti, iou) in &open {
                    let score = match &predicted[*ti] {
                        Some((pc, pm)) => crate::dynamics::physics_log_likelihood(
                            &(*pc, pm.clone()),
                            &(obs.cuboid, obs.mask.clone()),
                            &params,
                        )?,
                        // No usable prediction: fall far behind any real
                        // likelihood but stay ordered by overlap.
                        None => -1e6 + iou,
                    };
                    if best.map(|(b, _)| score > b).unwrap_or(true) {
                        best = Some((score, *ti));
                    }
                }
                best.expect("open is nonempty").1
            } else {
                open[0].0
            };
            assignment[oi] = Some(chosen);
            taken[chosen] = true;
        }

        for (oi, obs) in observations.into_iter().enumerate() {
            match assignment[oi] {
                Some(ti) => {
                    tracks[ti].push_state(*frame_index, obs.cuboid, obs.mask)?;
                    last_frame_of[ti] = *frame_index;
                }
                None => {
                    let mut track = ObjectTrack::new(format!("trk{next_track_id}"));
                    next_track_id += 1;
                    track.push_state(*frame_index, obs.cuboid, obs.mask)?;
                    tracks.push(track);
                    last_frame_of.push(*frame_index);
                }
            }
        }
    }

    let report = DiscoverReport {
        frames: frames.len(),
        tracks: tracks.len(),
        objects_per_frame,
        alpha,
    };
    Ok(DiscoverResult { tracks, report })
}

/// Runs discovery and persists `tracks.jsonl`, per-state mask PNGs under
/// `masks/`, and `report.json` into `out_dir`.
pub fn run_discover(
    scene_dir: &Path,
    out_dir: &Path,
    config: &PipelineConfig,
) -> Result<DiscoverResult> {
    let result = discover_scene(scene_dir, config)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    save_tracks(
        &result.tracks,
        &out_dir.join("tracks.jsonl"),
        &out_dir.join("masks"),
    )?;
    let report_path = out_dir.join("report.json");
    let text = serde_json::to_string_pretty(&result.report).expect("report serializes");
    std::fs::write(&report_path, text).map_err(|e| Error::io(&report_path, e))?;
    Ok(result)
}

/// Ground-truth object count per frame of a discover result, as a map
/// frame -> number of tracks observed there.
pub fn objects_by_frame(tracks: &[ObjectTrack]) -> BTreeMap<usize, usize> {
    let mut map = BTreeMap::new();
    for track in tracks {
        for state in track.states() {
            *map.entry(state.frame).or_insert(0) += 1;
        }
    }
    map
}
