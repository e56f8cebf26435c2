//! Per-frame surprise from the dynamics likelihood, and the relative
//! accuracy over plausible/implausible video pairs.
//!
//! Surprise at a frame is the summed negative physics log-likelihood of
//! every tracked object observed there, scored against its own one-step
//! (or gap-length) extrapolation. An object that goes missing while its
//! predicted mask is visibly unoccluded incurs a disappearance penalty:
//! the negated mean floored log of the mask term over the predicted
//! visible support, which for hard renders is -ln(floor), comfortably
//! above the per-object baseline. Objects missing behind an occluder
//! (predicted visible area under the pixel floor) cost nothing.

use serde::Serialize;
use std::path::Path;

use crate::camera::Camera;
use crate::cuboid::Cuboid;
use crate::dynamics::{
    mask_probability, physics_log_likelihood, predict_cuboid_steps, DynamicsParams,
};
use crate::error::{Error, Result};
use crate::geometry::render_all;
use crate::mask::Mask;
use crate::track::ObjectTrack;

#[derive(Debug, Clone, Serialize)]
pub struct SurpriseCurve {
    pub video_id: String,
    pub values: Vec<f64>,
}

impl SurpriseCurve {
    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Frame of the first maximum.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        best
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut text = String::from("frame,surprise\n");
        for (i, v) in self.values.iter().enumerate() {
            text.push_str(&format!("{i},{v}\n"));
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct SurpriseOptions {
    /// Minimum predicted visible area (pixels above 0.5) for a missing
    /// object to count as unexpectedly gone.
    pub visible_area_floor: f64,
    /// Tracks must have been observed at least this many times before
    /// their disappearance is penalized; keeps one-frame segmentation
    /// flickers from reading as violations.
    pub min_track_length: usize,
    /// A missing object keeps incurring the penalty while the gap to its
    /// last observation is at most this many frames.
    pub max_penalty_gap: usize,
}

impl Default for SurpriseOptions {
    fn default() -> Self {
        SurpriseOptions {
            visible_area_floor: 10.0,
            min_track_length: 3,
            max_penalty_gap: 3,
        }
    }
}

/// Number of frames in the video spanned by the tracks (last frame + 1).
pub fn video_span(tracks: &[ObjectTrack]) -> usize {
    tracks
        .iter()
        .filter_map(|t| t.states().last().map(|s| s.frame + 1))
        .max()
        .unwrap_or(0)
}

/// Computes the per-frame surprise for one video. `occluders` are static
/// cuboids rendered into every prediction (ground-truth mode passes the
/// scene occluders; discovered-track mode usually leaves it empty because
/// occluders get tracked like any other object). `n_frames` is the video
/// length; pass it explicitly whenever tracks may end before the video
/// does (an object that vanishes truncates its track, and the frames after
/// that are exactly where the disappearance penalty lives).
pub fn surprise_curve(
    tracks: &[ObjectTrack],
    occluders: &[Cuboid],
    cam: &Camera,
    params: &DynamicsParams,
    options: &SurpriseOptions,
    n_frames: Option<usize>,
    video_id: impl Into<String>,
) -> Result<SurpriseCurve> {
    params.validate()?;
    let n_frames = n_frames.unwrap_or_else(|| video_span(tracks));
    let mut values = vec![0.0f64; n_frames];

    for f in 0..n_frames {
        // Predicted cuboid per track for frame f, from the states strictly
        // before f. Tracks without enough history fall back to their last
        // known state for the render so occlusion context stays complete.
        let mut render_cuboids: Vec<Cuboid> = Vec::new();
        let mut predictions: Vec<Option<(usize, Cuboid, usize)>> = Vec::new();
        for (ti, track) in tracks.iter().enumerate() {
            let prior: Vec<_> = track
                .states()
                .iter()
                .filter(|s| s.frame < f)
                .cloned()
                .collect();
            let Some(last_prior) = prior.last() else {
                continue;
            };
            let gap = f - last_prior.frame;
            let mut history = ObjectTrack::new(track.id.clone());
            for s in &prior {
                history.push_state(s.frame, s.cuboid, s.mask.clone())?;
            }
            match predict_cuboid_steps(&history, params, gap) {
                Ok(c) => {
                    predictions.push(Some((ti, c, render_cuboids.len())));
                    render_cuboids.push(c);
                }
                Err(_) => {
                    // Single prior state: keep it in the render, no score.
                    predictions.push(None);
                    render_cuboids.push(last_prior.cuboid);
                }
            }
        }
        if render_cuboids.is_empty() {
            continue;
        }
        render_cuboids.extend_from_slice(occluders);
        let rendered = render_all(&render_cuboids, cam)?;

        let mut total = 0.0;
        for entry in predictions.iter().flatten() {
            let (ti, predicted_cuboid, slot) = *entry;
            let track = &tracks[ti];
            let predicted_mask = &rendered[slot];
            match track.state_at(f) {
                Some(observed) => {
                    let ll = physics_log_likelihood(
                        &(predicted_cuboid, predicted_mask.clone()),
                        &(observed.cuboid, observed.mask.clone()),
                        params,
                    )?;
                    total += -ll;
                }
                None => {
                    let last_frame = track
                        .states()
                        .iter()
                        .rfind(|s| s.frame < f)
                        .map(|s| s.frame)
                        .unwrap_or(0);
                    let gap = f - last_frame;
                    let observed_count = track.states().iter().filter(|s| s.frame < f).count();
                    if gap > options.max_penalty_gap || observed_count < options.min_track_length {
                        continue;
                    }
                    let visible = predicted_mask.count_above(0.5) as f64;
                    if visible <= options.visible_area_floor {
                        continue; // hidden behind something, as expected
                    }
                    total += disappearance_penalty(predicted_mask, params)?;
                }
            }
        }
        values[f] = total;
    }
    Ok(SurpriseCurve {
        video_id: video_id.into(),
        values,
    })
}

/// Penalty for an object that should be visible but was not observed: the
/// negated mean floored log mask probability of an all-zero observation,
/// averaged over the predicted visible support.
pub fn disappearance_penalty(predicted_mask: &Mask, params: &DynamicsParams) -> Result<f64> {
    let empty = Mask::zeros(predicted_mask.width(), predicted_mask.height());
    let p = mask_probability(predicted_mask, &empty, params)?;
    let mut total = 0.0;
    let mut n = 0usize;
    for (prob, pred) in p.weights().iter().zip(predicted_mask.weights()) {
        if *pred > 0.5 {
            total += prob.max(params.log_floor).ln();
            n += 1;
        }
    }
    if n == 0 {
        return Ok(0.0);
    }
    Ok(-(total / n as f64))
}

/// Fraction of pairs where the implausible video's maximum surprise
/// strictly exceeds the plausible one's; ties count half.
pub fn relative_accuracy(pairs: &[(SurpriseCurve, SurpriseCurve)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyReport("no surprise pairs"));
    }
    let mut score = 0.0;
    for (plausible, implausible) in pairs {
        let p = plausible.max();
        let i = implausible.max();
        if i > p {
            score += 1.0;
        } else if i == p {
            score += 0.5;
        }
    }
    Ok(score / pairs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::perfect_prediction_log_likelihood;
    use crate::synth;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;

    fn camera() -> Camera {
        Camera::identity_pose(64.0, 64, 64)
    }

    #[test]
    fn constant_velocity_gives_flat_baseline() {
        let mut cfg = synth::SceneConfig::new(9, 1, 10, camera());
        cfg.objects[0] = synth::ObjectSpec {
            motion: Some(synth::MotionKind::Straight),
            size: Some([1.4, 1.4, 1.4]),
            start: Some([-1.5, cfg.ground_y - 0.7, 10.0]),
            velocity: Some([0.15, 0.0, 0.0]),
            angular_velocity: Some(0.0),
        };
        let record = synth::generate(&cfg).unwrap();
        let curve = surprise_curve(
            &record.gt_tracks,
            &record.occluder_cuboids,
            &record.camera,
            &DynamicsParams::default(),
            &SurpriseOptions::default(),
            Some(record.frames.len()),
            "flat",
        )
        .unwrap();
        let baseline = -perfect_prediction_log_likelihood();
        for (f, v) in curve.values.iter().enumerate() {
            if f < 2 {
                assert_relative_eq!(*v, 0.0);
            } else {
                assert_relative_eq!(*v, baseline, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn teleport_spikes_by_gaussian_cost() {
        let mut cfg = synth::SceneConfig::new(21, 1, 12, camera());
        cfg.objects[0] = synth::ObjectSpec {
            motion: Some(synth::MotionKind::Straight),
            size: Some([1.2, 1.2, 1.2]),
            start: Some([-2.0, cfg.ground_y - 0.6, 10.0]),
            velocity: Some([0.12, 0.0, 0.0]),
            angular_velocity: Some(0.0),
        };
        let record = synth::generate(&cfg).unwrap();
        let violated = synth::inject_violation(
            &record,
            synth::ViolationKind::Teleport,
            6,
            0,
            Vector3::new(3.0, 0.0, 0.0),
        )
        .unwrap();
        let params = DynamicsParams::default();
        let curve = surprise_curve(
            &violated.gt_tracks,
            &violated.occluder_cuboids,
            &violated.camera,
            &params,
            &SurpriseOptions::default(),
            Some(violated.frames.len()),
            "tp",
        )
        .unwrap();
        assert_eq!(curve.argmax(), 6);
        // A 3-sigma jump on one axis costs at least 4.5 over the baseline
        // before the mask mismatch adds more.
        let baseline = -perfect_prediction_log_likelihood();
        assert!(
            curve.values[6] >= baseline + 4.0,
            "spike {}",
            curve.values[6]
        );
        for (f, v) in curve.values.iter().enumerate() {
            if f != 6 && f >= 2 {
                assert!(curve.values[6] > *v, "frame {f} rivals the spike");
            }
        }
    }

    #[test]
    fn disappearance_in_the_open_is_penalized() {
        let (cfg, violation) = synth::disappear_config(33, 12, camera());
        let (plausible, implausible) = synth::generate_pair(&cfg, &violation).unwrap();
        let params = DynamicsParams::default();
        let options = SurpriseOptions::default();
        let p_curve = surprise_curve(
            &plausible.gt_tracks,
            &plausible.occluder_cuboids,
            &plausible.camera,
            &params,
            &options,
            Some(plausible.frames.len()),
            "p",
        )
        .unwrap();
        let i_curve = surprise_curve(
            &implausible.gt_tracks,
            &implausible.occluder_cuboids,
            &implausible.camera,
            &params,
            &options,
            Some(implausible.frames.len()),
            "i",
        )
        .unwrap();
        // Hard masks make the penalty exactly -ln(log_floor).
        let expected_penalty = -(params.log_floor.ln());
        assert_relative_eq!(
            i_curve.values[violation.frame],
            expected_penalty,
            epsilon = 1e-9
        );
        assert!(i_curve.max() > p_curve.max());
        assert!(i_curve.argmax().abs_diff(violation.frame) <= 2);
    }

    #[test]
    fn disappearance_behind_occluder_costs_nothing() {
        // Mover slides behind a wall that fully covers its projection;
        // its track simply stops while occluded.
        let mut cfg = synth::SceneConfig::new(55, 1, 20, camera());
        cfg.occluders = vec![synth::OccluderSpec {
            center: Some([0.3, cfg.ground_y - 1.6, 5.5]),
            size: Some([2.2, 3.2, 0.25]),
        }];
        cfg.objects[0] = synth::ObjectSpec {
            motion: Some(synth::MotionKind::Straight),
            size: Some([1.0, 1.0, 1.0]),
            start: Some([-2.6, cfg.ground_y - 0.5, 11.0]),
            velocity: Some([0.22, 0.0, 0.0]),
            angular_velocity: Some(0.0),
        };
        let record = synth::generate(&cfg).unwrap();
        let track = &record.gt_tracks[0];
        // Find a frame where the object is (almost) fully occluded.
        let hidden = track
            .states()
            .iter()
            .find(|s| s.mask.count_above(0.5) == 0)
            .map(|s| s.frame);
        let Some(hidden_frame) = hidden else {
            panic!("construction should fully occlude the object at some frame");
        };
        // Rebuild the track without any state from the hidden frame on, as
        // a tracker that lost the object would see it.
        let mut cut = ObjectTrack::new("obj0");
        for s in track.states().iter().filter(|s| s.frame < hidden_frame) {
            cut.push_state(s.frame, s.cuboid, s.mask.clone()).unwrap();
        }
        let curve = surprise_curve(
            &[cut],
            &record.occluder_cuboids,
            &record.camera,
            &DynamicsParams::default(),
            &SurpriseOptions::default(),
            Some(record.frames.len()),
            "occ",
        )
        .unwrap();
        let baseline = -perfect_prediction_log_likelihood();
        for f in hidden_frame..curve.values.len() {
            assert!(
                curve.values[f] < baseline + 1.0,
                "no disappearance penalty expected at frame {f}, got {}",
                curve.values[f]
            );
        }
    }

    #[test]
    fn relative_accuracy_rules() {
        let mk = |vals: &[f64]| SurpriseCurve {
            video_id: "v".into(),
            values: vals.to_vec(),
        };
        // Implausible always higher.
        let pairs = vec![(mk(&[1.0, 2.0]), mk(&[1.0, 5.0]))];
        assert_relative_eq!(relative_accuracy(&pairs).unwrap(), 1.0);
        // Identical curves tie at 0.5.
        let pairs = vec![(mk(&[1.0, 2.0]), mk(&[1.0, 2.0]))];
        assert_relative_eq!(relative_accuracy(&pairs).unwrap(), 0.5);
        // 3 of 4 correct plus one tie.
        let pairs = vec![
            (mk(&[1.0]), mk(&[2.0])),
            (mk(&[1.0]), mk(&[2.0])),
            (mk(&[1.0]), mk(&[2.0])),
            (mk(&[1.0]), mk(&[1.0])),
        ];
        assert_relative_eq!(relative_accuracy(&pairs).unwrap(), 0.875);
    }

    #[test]
    fn relative_accuracy_invariant_to_monotone_transform() {
        let mk = |vals: Vec<f64>| SurpriseCurve {
            video_id: "v".into(),
            values: vals,
        };
        let pairs: Vec<_> = (0..5)
            .map(|i| {
                (
                    mk(vec![i as f64, 2.0 * i as f64]),
                    mk(vec![i as f64 + 0.5, 1.5 * i as f64]),
                )
            })
            .collect();
        let base = relative_accuracy(&pairs).unwrap();
        let transformed: Vec<_> = pairs
            .iter()
            .map(|(p, i)| {
                (
                    mk(p.values.iter().map(|v| (3.0 * v).exp()).collect()),
                    mk(i.values.iter().map(|v| (3.0 * v).exp()).collect()),
                )
            })
            .collect();
        assert_relative_eq!(base, relative_accuracy(&transformed).unwrap());
    }
}
