//! Loss reporting over a scene: mixture components from the classical
//! decomposition (flat per-slot mean colors, decoded mask = attention
//! mask), physics loss from discovered tracks.

use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::frame::Frame;
use crate::genmodel::{image_log_likelihood, total_loss, ComponentPrediction};
use crate::pipeline::config::PipelineConfig;
use crate::pipeline::discover::discover_scene;
use crate::segment::{classical_segment, Decomposition};
use crate::surprise::{surprise_curve, SurpriseOptions};

#[derive(Debug, Clone, Serialize)]
pub struct LossReport {
    pub frames: usize,
    /// Mean per-frame image loss (negated mixture log-likelihood).
    pub image_loss: f64,
    /// Mean per-frame KL loss. Zero for the classical path, whose decoded
    /// masks coincide with the attention masks and which has no latents.
    pub kl_loss: f64,
    /// Mean per-frame physics loss over scorable object states.
    pub physics_loss: f64,
    /// Totals at phase one (before the switch step) and phase two.
    pub total_phase_one: f64,
    pub total_phase_two: f64,
}

/// Builds mixture components from a decomposition: each slot becomes a
/// component whose mean image is the slot's mean color, with the slot mask
/// reused as the decoded mask.
pub fn components_from_decomposition(
    image: &Frame,
    decomposition: &Decomposition,
) -> Vec<ComponentPrediction> {
    let (w, h) = (image.width(), image.height());
    decomposition
        .masks
        .iter()
        .enumerate()
        .map(|(slot, mask)| {
            let mut sum = [0.0f64; 3];
            let mut weight = 0.0;
            for y in 0..h {
                for x in 0..w {
                    let m = mask.get(x, y);
                    if m > 0.0 {
                        let p = image.get(x, y);
                        for c in 0..3 {
                            sum[c] += m * p[c];
                        }
                        weight += m;
                    }
                }
            }
            let mean = if weight > 0.0 {
                [sum[0] / weight, sum[1] / weight, sum[2] / weight]
            } else {
                [0.0, 0.0, 0.0]
            };
            ComponentPrediction {
                mask: mask.clone(),
                mean_image: Frame::filled(image.index, w, h, mean),
                decoded_mask: mask.clone(),
                is_background: slot == 0,
            }
        })
        .collect()
}

/// Evaluates all loss terms over a scene directory at the configured
/// weights, reporting both phase totals.
pub fn eval_loss(scene_dir: &Path, config: &PipelineConfig) -> Result<LossReport> {
    config.validate()?;
    let weights = config.loss.weights();
    let camera = crate::camera::Camera::load_json(&scene_dir.join("camera.json"))?;

    // Image term, per frame, from whole-image classical decompositions.
    let mut frame_paths = Vec::new();
    {
        let entries =
            std::fs::read_dir(scene_dir).map_err(|e| crate::error::Error::io(scene_dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| crate::error::Error::io(scene_dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name.starts_with("frame_") && name.ends_with(".png") {
                frame_paths.push((name, entry.path()));
            }
        }
        frame_paths.sort();
    }
    if frame_paths.is_empty() {
        return Err(crate::error::Error::format(scene_dir, "no frames found"));
    }

    let mut image_loss_total = 0.0;
    for (i, (_, path)) in frame_paths.iter().enumerate() {
        let image = Frame::load_png(i, path)?;
        let decomposition = classical_segment(&image, config.segmenter.slots)?;
        let components = components_from_decomposition(&image, &decomposition);
        image_loss_total += -image_log_likelihood(&image, &components, &weights)?;
    }
    let image_loss = image_loss_total / frame_paths.len() as f64;

    // The classical path has no encoder: decoded masks equal attention
    // masks (mask KL is identically zero) and there are no latent
    // posteriors, so the KL term is an honest zero.
    let kl = 0.0;

    // Physics term from discovered tracks.
    let result = discover_scene(scene_dir, config)?;
    let params = config.dynamics.params();
    let curve = surprise_curve(
        &result.tracks,
        &[],
        &camera,
        &params,
        &SurpriseOptions::default(),
        Some(frame_paths.len()),
        "loss",
    )?;
    let scored: Vec<f64> = curve.values.iter().copied().filter(|v| *v != 0.0).collect();
    let physics_loss = if scored.is_empty() {
        0.0
    } else {
        scored.iter().sum::<f64>() / scored.len() as f64
    };

    Ok(LossReport {
        frames: frame_paths.len(),
        image_loss,
        kl_loss: kl,
        physics_loss,
        total_phase_one: total_loss(0, image_loss, kl, physics_loss, &weights),
        total_phase_two: total_loss(
            weights.phase_switch_step,
            image_loss,
            kl,
            physics_loss,
            &weights,
        ),
    })
}
