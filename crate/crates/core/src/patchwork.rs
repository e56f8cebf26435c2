//! Multi-scale sub-patch layout and the sequential merging of per-window
//! segments into a global segmentation.
//!
//! The image is divided into an 8x8 grid of cells; one window of 2x2 cells
//! is anchored at every cell, clamped inward at the right and bottom
//! borders so all 64 windows stay inside the image (border windows
//! duplicate coverage). Merging folds the windows' segments together in
//! window order: a segment joins the existing object it overlaps most,
//! provided that overlap exceeds the pixel threshold, and starts a new
//! object otherwise.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::mask::{mask_overlap_pixels, Mask};

pub const GRID: usize = 8;
pub const WINDOW_CELLS: usize = 2;

/// Merge overlap threshold in pixels, valid at [`REFERENCE_SIZE`].
pub const DEFAULT_OVERLAP_THRESHOLD: f64 = 20.0;
/// Resolution the default threshold is calibrated for.
pub const REFERENCE_SIZE: (usize, usize) = (1024, 1024);
pub const DEFAULT_BIN_THRESHOLD: f64 = 0.5;

/// A pixel rectangle, `x0..x0+width` by `y0..y0+height`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

/// The 64-window layout over one image.
#[derive(Debug, Clone)]
pub struct PatchLayout {
    pub image_width: usize,
    pub image_height: usize,
    pub window_width: usize,
    pub window_height: usize,
    pub windows: Vec<Window>,
}

/// Builds the 8x8 layout. Dimensions must be divisible by 8.
pub fn make_layout(height: usize, width: usize) -> Result<PatchLayout> {
    if height == 0 || width == 0 || !height.is_multiple_of(GRID) || !width.is_multiple_of(GRID) {
        return Err(Error::LayoutError(height, width));
    }
    let cell_h = height / GRID;
    let cell_w = width / GRID;
    let win_h = WINDOW_CELLS * cell_h;
    let win_w = WINDOW_CELLS * cell_w;
    let mut windows = Vec::with_capacity(GRID * GRID);
    for row in 0..GRID {
        for col in 0..GRID {
            let y0 = (row * cell_h).min(height - win_h);
            let x0 = (col * cell_w).min(width - win_w);
            windows.push(Window {
                x0,
                y0,
                width: win_w,
                height: win_h,
            });
        }
    }
    Ok(PatchLayout {
        image_width: width,
        image_height: height,
        window_width: win_w,
        window_height: win_h,
        windows,
    })
}

/// Scales a pixel threshold calibrated at [`REFERENCE_SIZE`] to another
/// resolution by area ratio.
pub fn scaled_overlap_threshold(base: f64, width: usize, height: usize) -> f64 {
    let ref_area = (REFERENCE_SIZE.0 * REFERENCE_SIZE.1) as f64;
    base * (width * height) as f64 / ref_area
}

/// One window's worth of segments, already lifted to full-image coordinates
/// (zero outside the window).
#[derive(Debug, Clone)]
pub struct WindowSegments {
    pub window_index: usize,
    pub masks: Vec<Mask>,
}

/// A merged global object: binarized mask plus the windows that fed it.
#[derive(Debug, Clone)]
pub struct GlobalObject {
    pub id: String,
    pub mask: Mask,
    pub windows: BTreeSet<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct GlobalSegmentation {
    pub objects: Vec<GlobalObject>,
}

impl GlobalSegmentation {
    pub fn masks(&self) -> Vec<&Mask> {
        self.objects.iter().map(|o| &o.mask).collect()
    }
}

/// Folds per-window segments (background slots already excluded) into
/// global objects. Windows must arrive in raster order; the ordering is
/// semantically significant. `overlap_threshold` is in pixels of the
/// actual image; use [`scaled_overlap_threshold`] to derive it from the
/// reference constant.
///
/// After the fold, the same merge rule is applied transitively to the
/// accumulated objects themselves until a fixed point: a segment that
/// started its own object before the object it belongs with had grown
/// underneath it is fused once their unions overlap.
pub fn merge_segments(
    per_window: &[WindowSegments],
    overlap_threshold: f64,
    bin_threshold: f64,
) -> Result<GlobalSegmentation> {
    let mut global = GlobalSegmentation::default();
    let mut next_id = 0usize;
    for segments in per_window {
        for mask in &segments.masks {
            let binary = mask.binarize(bin_threshold);
            if binary.count_above(bin_threshold) == 0 {
                continue;
            }
            // Best existing object by overlap; merge only when the overlap
            // strictly exceeds the threshold.
            let mut best: Option<(usize, usize)> = None;
            for (i, obj) in global.objects.iter().enumerate() {
                let overlap = mask_overlap_pixels(&binary, &obj.mask, bin_threshold)?;
                if (overlap as f64) > overlap_threshold
                    && best.map(|(_, o)| overlap > o).unwrap_or(true)
                {
                    best = Some((i, overlap));
                }
            }
            match best {
                Some((i, _)) => {
                    let obj = &mut global.objects[i];
                    obj.mask = obj.mask.union(&binary)?;
                    obj.windows.insert(segments.window_index);
                }
                None => {
                    let mut windows = BTreeSet::new();
                    windows.insert(segments.window_index);
                    global.objects.push(GlobalObject {
                        id: format!("seg{next_id}"),
                        mask: binary,
                        windows,
                    });
                    next_id += 1;
                }
            }
        }
    }
    fuse_overlapping(&mut global, overlap_threshold, bin_threshold)?;
    Ok(global)
}

/// Transitive closure of the merge rule over whole objects: any pair of
/// objects whose masks overlap above the threshold is unioned (earlier
/// object keeps its identity), repeated until stable.
fn fuse_overlapping(
    global: &mut GlobalSegmentation,
    overlap_threshold: f64,
    bin_threshold: f64,
) -> Result<()> {
    loop {
        let mut fused = false;
        'outer: for i in 0..global.objects.len() {
            for j in i + 1..global.objects.len() {
                let overlap = mask_overlap_pixels(
                    &global.objects[i].mask,
                    &global.objects[j].mask,
                    bin_threshold,
                )?;
                if (overlap as f64) > overlap_threshold {
                    let late = global.objects.remove(j);
                    let early = &mut global.objects[i];
                    early.mask = early.mask.union(&late.mask)?;
                    early.windows.extend(late.windows);
                    fused = true;
                    break 'outer;
                }
            }
        }
        if !fused {
            return Ok(());
        }
    }
}
