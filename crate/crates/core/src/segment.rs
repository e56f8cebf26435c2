//! Scene decomposition into an ordered set of masks that sum to one.
//!
//! The recursion carves masks out of a shrinking context: starting from an
//! all-ones context, each step multiplies the segmenter's raw attention map
//! into the remaining context and removes it. The final slot is the leftover
//! context itself, which is what makes the per-pixel sum exactly one for any
//! attention function that stays in `[0, 1]`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::mask::Mask;

/// Raw attention output: unvalidated weights, checked by [`decompose`]
/// before they become a [`Mask`].
#[derive(Debug, Clone)]
pub struct AttentionMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

/// The pluggable segmenter: given an image and the yet-unexplained context,
/// produce a raw per-pixel attention map in `[0, 1]`, with a fixed slot
/// budget.
pub trait Segmenter {
    fn attention(&self, image: &Frame, context: &Mask) -> AttentionMap;

    /// Slot budget K (total masks emitted, including the background slot).
    fn slots(&self) -> usize;
}

/// Ordered decomposition of an image. Slot 0 is the background; the masks
/// sum to one per pixel and each mask is bounded by the context it was
/// carved from.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub masks: Vec<Mask>,
    /// Context trace c_0 .. c_{K-1} (c_0 is all ones).
    pub contexts: Vec<Mask>,
    /// Optional per-slot latent attachment. Slot-aligned with `masks`;
    /// segmenters without an encoder leave these empty.
    pub latents: Vec<Option<Vec<f64>>>,
}

impl Decomposition {
    /// Object masks only (every slot but the background).
    pub fn object_masks(&self) -> &[Mask] {
        &self.masks[1..]
    }
}

/// Runs the decomposition recursion for `K - 1` steps and emits the leftover
/// context as the final slot.
pub fn decompose(image: &Frame, seg: &dyn Segmenter) -> Result<Decomposition> {
    let k = seg.slots();
    if k < 2 {
        return Err(Error::ContractViolation(format!(
            "slot budget must be at least 2, got {k}"
        )));
    }
    let (w, h) = (image.width(), image.height());
    let mut context = Mask::ones(w, h);
    let mut contexts = vec![context.clone()];
    let mut masks = Vec::with_capacity(k);
    for _ in 0..k - 1 {
        let raw = seg.attention(image, &context);
        if raw.width != w || raw.height != h {
            return Err(Error::ContractViolation(format!(
                "attention map is {}x{}, image is {w}x{h}",
                raw.width, raw.height
            )));
        }
        if let Some(bad) = raw.values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::ContractViolation(format!(
                "attention value {bad} outside [0, 1]"
            )));
        }
        let attention = Mask::from_weights(w, h, raw.values)?;
        masks.push(context.mul(&attention)?);
        context = context.mul(&attention.complement())?;
        contexts.push(context.clone());
    }
    masks.push(context);
    let latents = vec![None; masks.len()];
    Ok(Decomposition {
        masks,
        contexts,
        latents,
    })
}

/// Neural-free baseline: k-means color quantization followed by connected
/// components. The largest color cluster touching the image border becomes
/// the background; remaining components are emitted largest-first as hard
/// masks, up to `K - 1` object slots. The result respects the same
/// invariants as [`decompose`]: slot 0 is the background (complement of all
/// components) and the slots sum to one.
pub fn classical_segment(image: &Frame, k: usize) -> Result<Decomposition> {
    if k < 2 {
        return Err(Error::ContractViolation(format!(
            "slot budget must be at least 2, got {k}"
        )));
    }
    let (w, h) = (image.width(), image.height());
    let assignment = kmeans_rgb(image, k, 30);
    let n_clusters = assignment.n_clusters;

    // Background = largest cluster among those touching the image border.
    let mut cluster_sizes = vec![0usize; n_clusters];
    let mut touches_border = vec![false; n_clusters];
    for y in 0..h {
        for x in 0..w {
            let c = assignment.labels[y * w + x];
            cluster_sizes[c] += 1;
            if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
                touches_border[c] = true;
            }
        }
    }
    let background_cluster = (0..n_clusters)
        .filter(|&c| touches_border[c] && cluster_sizes[c] > 0)
        .max_by_key(|&c| (cluster_sizes[c], std::cmp::Reverse(c)))
        .unwrap_or(0);

    // 4-connected components within each non-background cluster.
    let mut component = vec![usize::MAX; w * h];
    let mut component_areas: Vec<usize> = Vec::new();
    for start in 0..w * h {
        if component[start] != usize::MAX || assignment.labels[start] == background_cluster {
            continue;
        }
        let comp_id = component_areas.len();
        let cluster = assignment.labels[start];
        let mut area = 0usize;
        let mut stack = vec![start];
        component[start] = comp_id;
        while let Some(p) = stack.pop() {
            area += 1;
            let (x, y) = (p % w, p / w);
            let mut visit = |q: usize| {
                if component[q] == usize::MAX && assignment.labels[q] == cluster {
                    component[q] = comp_id;
                    stack.push(q);
                }
            };
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < w {
                visit(p + 1);
            }
            if y > 0 {
                visit(p - w);
            }
            if y + 1 < h {
                visit(p + w);
            }
        }
        component_areas.push(area);
    }

    // Largest components first, capped at K - 1 object slots.
    let mut order: Vec<usize> = (0..component_areas.len()).collect();
    order.sort_by_key(|&c| (std::cmp::Reverse(component_areas[c]), c));
    order.truncate(k - 1);

    let mut masks = vec![Mask::zeros(w, h); k];
    let mut slot_of_component = vec![usize::MAX; component_areas.len()];
    for (slot, &comp) in order.iter().enumerate() {
        slot_of_component[comp] = slot + 1;
    }
    let mut background = Mask::ones(w, h);
    for p in 0..w * h {
        let comp = component[p];
        if comp != usize::MAX && slot_of_component[comp] != usize::MAX {
            let (x, y) = (p % w, p / w);
            masks[slot_of_component[comp]].set(x, y, 1.0);
            background.set(x, y, 0.0);
        }
    }
    masks[0] = background;

    // Synthesize the context trace so the decomposition invariants read the
    // same as for the recursive path: c_i = 1 - sum of the first i masks.
    let mut contexts = vec![Mask::ones(w, h)];
    let mut remaining = Mask::ones(w, h);
    for mask in &masks[..k - 1] {
        remaining = Mask::from_fn(w, h, |x, y| (remaining.get(x, y) - mask.get(x, y)).max(0.0));
        contexts.push(remaining.clone());
    }
    let latents = vec![None; masks.len()];
    Ok(Decomposition {
        masks,
        contexts,
        latents,
    })
}

struct KmeansAssignment {
    labels: Vec<usize>,
    n_clusters: usize,
}

/// Converged centers closer than this collapse into one cluster. Keeps a
/// forced-high k from shredding nearly uniform regions into micro-bands
/// while leaving genuinely distinct shades (band spacing well above this)
/// separate.
const CENTER_MERGE_TOL: f64 = 0.02;

/// Lloyd's k-means on RGB values with k-means++ seeding from a fixed-seed
/// generator, so decompositions are deterministic given the image.
fn kmeans_rgb(image: &Frame, k: usize, iterations: usize) -> KmeansAssignment {
    use rand::Rng;
    let pixels = image.pixels();
    let n = pixels.len();
    let mut rng = ChaCha8Rng::seed_from_u64(0);

    let dist2 = |a: &[f64; 3], b: &[f64; 3]| -> f64 {
        (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
    };

    // k-means++ seeding. When every remaining distance is zero (fewer
    // distinct colors than k) the extra centers duplicate an existing one,
    // which later yields empty clusters; that is fine.
    let mut centers: Vec<[f64; 3]> = Vec::with_capacity(k);
    centers.push(pixels[rng.random_range(0..n)]);
    let mut best_d2: Vec<f64> = pixels.iter().map(|p| dist2(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = best_d2.iter().sum();
        let next = if total <= f64::EPSILON {
            pixels[rng.random_range(0..n)]
        } else {
            let mut target = rng.random_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &d) in best_d2.iter().enumerate() {
                target -= d;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            pixels[chosen]
        };
        centers.push(next);
        for (i, p) in pixels.iter().enumerate() {
            best_d2[i] = best_d2[i].min(dist2(p, &next));
        }
    }

    let mut labels = vec![0usize; n];
    for _ in 0..iterations {
        let mut changed = false;
        for (i, p) in pixels.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, center) in centers.iter().enumerate() {
                let d = dist2(p, center);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        let mut sums = vec![[0.0f64; 3]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in pixels.iter().enumerate() {
            let c = labels[i];
            counts[c] += 1;
            for ch in 0..3 {
                sums[c][ch] += p[ch];
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for ch in 0..3 {
                    centers[c][ch] = sums[c][ch] / counts[c] as f64;
                }
            }
        }
        if !changed {
            break;
        }
    }

    // Collapse near-duplicate centers (union-find by distance).
    let mut group: Vec<usize> = (0..k).collect();
    fn find(group: &mut Vec<usize>, i: usize) -> usize {
        if group[i] != i {
            let root = find(group, group[i]);
            group[i] = root;
        }
        group[i]
    }
    for i in 0..k {
        for j in i + 1..k {
            if dist2(&centers[i], &centers[j]).sqrt() < CENTER_MERGE_TOL {
                let (ri, rj) = (find(&mut group, i), find(&mut group, j));
                if ri != rj {
                    group[rj.max(ri)] = rj.min(ri);
                }
            }
        }
    }
    for label in labels.iter_mut() {
        *label = find(&mut group, *label);
    }
    KmeansAssignment {
        labels,
        n_clusters: k,
    }
}
