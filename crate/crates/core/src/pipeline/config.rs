//! Pipeline configuration: TOML with one section per module block; every
//! field has a default so partial files work.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dynamics::DynamicsParams;
use crate::error::{Error, Result};
use crate::genmodel::LossWeights;
use crate::geometry::BackprojectionConfig;
use crate::surprise::SurpriseOptions;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "lowercase")]
pub enum SegmenterKind {
    /// k-means color quantization + connected components.
    Classical,
    /// Masks produced by an outside model, read from `external_mask_dir`
    /// as `mask_f<frame>_*.png`.
    External,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmenterSection {
    pub kind: SegmenterKind,
    /// Slot budget K (background + K-1 object slots).
    pub slots: usize,
    pub external_mask_dir: Option<PathBuf>,
}

impl Default for SegmenterSection {
    fn default() -> Self {
        SegmenterSection {
            kind: SegmenterKind::Classical,
            slots: 5,
            external_mask_dir: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PatchworkSection {
    /// Decompose per 2x2-cell window and merge, instead of one whole-image
    /// pass.
    pub multi_scale: bool,
    /// Merge threshold in pixels at the 1024x1024 reference resolution;
    /// scaled by area for other sizes.
    pub overlap_threshold: f64,
    pub bin_threshold: f64,
}

impl Default for PatchworkSection {
    fn default() -> Self {
        PatchworkSection {
            multi_scale: true,
            overlap_threshold: crate::patchwork::DEFAULT_OVERLAP_THRESHOLD,
            bin_threshold: crate::patchwork::DEFAULT_BIN_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BackprojectionSection {
    /// Depth slope. With `alpha_auto`, recalibrated per scene from
    /// `gt.jsonl` when present.
    pub alpha: f64,
    pub alpha_auto: bool,
    /// Extreme pixels per direction at the 1024-wide reference; scaled
    /// linearly with image width when `boundary_count_auto` is on.
    pub boundary_count: usize,
    pub boundary_count_auto: bool,
    pub fixed_rotation: [f64; 3],
    pub fixed_z_size: f64,
}

impl Default for BackprojectionSection {
    fn default() -> Self {
        BackprojectionSection {
            alpha: 10.0,
            alpha_auto: true,
            boundary_count: 200,
            boundary_count_auto: true,
            fixed_rotation: [0.0, 0.0, 0.0],
            fixed_z_size: 1.0,
        }
    }
}

impl BackprojectionSection {
    pub fn effective_boundary_count(&self, image_width: usize) -> usize {
        if self.boundary_count_auto {
            ((self.boundary_count as f64 * image_width as f64 / 1024.0).round() as usize).max(1)
        } else {
            self.boundary_count
        }
    }

    pub fn to_config(&self, alpha: f64, image_width: usize) -> BackprojectionConfig {
        BackprojectionConfig {
            alpha,
            boundary_count: self.effective_boundary_count(image_width),
            fixed_rotation: Vector3::from(self.fixed_rotation),
            fixed_z_size: self.fixed_z_size,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DynamicsSection {
    /// Physics-based re-ranking of ambiguous associations and surprise
    /// scoring. Disabling never changes segmentation outputs.
    pub physics: bool,
    pub sigma_t: f64,
    pub sigma_s: f64,
    pub sigma_q: f64,
    pub history_window: usize,
    pub mask_bin_threshold: f64,
    pub log_floor: f64,
}

impl Default for DynamicsSection {
    fn default() -> Self {
        let d = DynamicsParams::default();
        DynamicsSection {
            physics: true,
            sigma_t: d.sigma_t,
            sigma_s: d.sigma_s,
            sigma_q: d.sigma_q,
            history_window: d.history_window,
            mask_bin_threshold: d.mask_bin_threshold,
            log_floor: d.log_floor,
        }
    }
}

impl DynamicsSection {
    pub fn params(&self) -> DynamicsParams {
        DynamicsParams {
            sigma_t: self.sigma_t,
            sigma_s: self.sigma_s,
            sigma_q: self.sigma_q,
            history_window: self.history_window,
            mask_bin_threshold: self.mask_bin_threshold,
            log_floor: self.log_floor,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AssociationSection {
    /// Minimum IoU against a track's last mask to consider joining it.
    pub iou_threshold: f64,
    /// Segments below this pixel count never become objects.
    pub min_object_px: f64,
    /// Drop merged segments colored like the image border. Window-local
    /// decompositions can mislabel their local background and leak true
    /// background pieces in as segments; globally, background is the
    /// complement of all objects, so those pieces are not objects.
    pub background_filter: bool,
    /// Color distance below which a segment counts as background-colored.
    pub background_tolerance: f64,
}

impl Default for AssociationSection {
    fn default() -> Self {
        AssociationSection {
            iou_threshold: 0.2,
            min_object_px: 4.0,
            background_filter: true,
            background_tolerance: 0.12,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LossSection {
    pub beta: f64,
    pub gamma: f64,
    pub sigma: f64,
    pub sigma_b: f64,
    pub phase_switch_step: usize,
}

impl Default for LossSection {
    fn default() -> Self {
        let w = LossWeights::default();
        LossSection {
            beta: w.beta,
            gamma: w.gamma,
            sigma: w.sigma,
            sigma_b: w.sigma_b,
            phase_switch_step: w.phase_switch_step,
        }
    }
}

impl LossSection {
    pub fn weights(&self) -> LossWeights {
        LossWeights {
            beta: self.beta,
            gamma: self.gamma,
            sigma: self.sigma,
            sigma_b: self.sigma_b,
            phase_switch_step: self.phase_switch_step,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SurpriseSection {
    pub visible_area_floor: f64,
    pub min_track_length: usize,
    pub max_penalty_gap: usize,
}

impl Default for SurpriseSection {
    fn default() -> Self {
        let o = SurpriseOptions::default();
        SurpriseSection {
            visible_area_floor: o.visible_area_floor,
            min_track_length: o.min_track_length,
            max_penalty_gap: o.max_penalty_gap,
        }
    }
}

impl SurpriseSection {
    pub fn options(&self) -> SurpriseOptions {
        SurpriseOptions {
            visible_area_floor: self.visible_area_floor,
            min_track_length: self.min_track_length,
            max_penalty_gap: self.max_penalty_gap,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub segmenter: SegmenterSection,
    pub patchwork: PatchworkSection,
    pub backprojection: BackprojectionSection,
    pub dynamics: DynamicsSection,
    pub association: AssociationSection,
    pub loss: LossSection,
    pub surprise: SurpriseSection,
    /// Camera file to use when a scene directory has none.
    pub camera_file: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: PipelineConfig =
            toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.segmenter.slots < 2 {
            return Err(Error::InvalidConfig(
                "segmenter.slots must be at least 2".into(),
            ));
        }
        if self.segmenter.kind == SegmenterKind::External
            && self.segmenter.external_mask_dir.is_none()
        {
            return Err(Error::InvalidConfig(
                "segmenter.kind = external requires external_mask_dir".into(),
            ));
        }
        self.dynamics.params().validate()?;
        self.backprojection
            .to_config(self.backprojection.alpha, 1024)
            .validate()?;
        self.loss.weights().validate()?;
        Ok(())
    }

    /// Fully commented template with every default spelled out.
    pub fn default_toml() -> &'static str {
        r#"# Pipeline configuration. Every key is optional; the values below are
# the defaults.

[segmenter]
# "classical" (k-means color clustering + connected components) or
# "external" (read masks from external_mask_dir as mask_f<frame>_*.png).
kind = "classical"
# Slot budget per decomposition: 1 background + (slots - 1) object slots.
slots = 5
# external_mask_dir = "path/to/masks"

[patchwork]
# Decompose 64 overlapping 2x2-cell windows and merge, instead of one
# whole-image pass.
multi_scale = true
# Merge overlap threshold in pixels at 1024x1024; scaled by image area.
overlap_threshold = 20.0
bin_threshold = 0.5

[backprojection]
# Depth slope for t_z = 1 + alpha * normalized_bottom_bound.
alpha = 10.0
# Recalibrate alpha from gt.jsonl when the scene has one.
alpha_auto = true
# Extreme pixels per direction entering the soft bounds, calibrated for
# 1024-wide images; scaled linearly with image width when auto is on.
boundary_count = 200
boundary_count_auto = true
fixed_rotation = [0.0, 0.0, 0.0]
fixed_z_size = 1.0

[dynamics]
# Use the physics likelihood to re-rank ambiguous track associations and
# to score surprise. Never changes segmentation outputs.
physics = true
sigma_t = 1.0
sigma_s = 1.0
sigma_q = 1.0
history_window = 3
mask_bin_threshold = 0.5
log_floor = 1e-6

[association]
# Minimum IoU against a track's last mask to join that track.
iou_threshold = 0.2
# Segments smaller than this many pixels are dropped as noise.
min_object_px = 4.0
# Drop merged segments colored like the image border (the global
# background is the complement of all objects).
background_filter = true
background_tolerance = 0.12

[loss]
beta = 0.5
gamma = 0.5
sigma = 0.11
sigma_b = 0.07
phase_switch_step = 100000

[surprise]
# Predicted visible pixels below this floor mean "occluded, not gone".
visible_area_floor = 10.0
# Minimum observations before a track's disappearance is penalized.
min_track_length = 3
# Keep penalizing a missing object for at most this many frames.
max_penalty_gap = 3
"#
    }
}
