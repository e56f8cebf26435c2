//! Evaluation metrics: 2D mask IoU and detection, 3D cuboid IoU (exact
//! slab intersection for axis-aligned boxes, fixed-seed Monte Carlo
//! otherwise), 3D recall, and the affine-aligned translation correlation.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, Vector3, Vector4};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cuboid::Cuboid;
use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::track::ObjectTrack;

pub const DETECTION_IOU: f64 = 0.5;
pub const RECALL3D_IOU: f64 = 0.1;
pub const DEFAULT_IOU3D_SAMPLES: usize = 100_000;
const MONTE_CARLO_SEED: u64 = 0x51c0_ffee;

/// Intersection over union of two masks, both binarized at 0.5 first.
/// Zero when both are empty.
pub fn iou2d(a: &Mask, b: &Mask) -> Result<f64> {
    a.check_same_size(b)?;
    let mut intersection = 0usize;
    let mut union = 0usize;
    for (x, y) in a.weights().iter().zip(b.weights()) {
        let xa = *x > 0.5;
        let yb = *y > 0.5;
        if xa && yb {
            intersection += 1;
        }
        if xa || yb {
            union += 1;
        }
    }
    if union == 0 {
        return Ok(0.0);
    }
    Ok(intersection as f64 / union as f64)
}

/// Scores for one frame: per ground-truth object, the best IoU over all
/// predictions (predictions may be reused), the mean of those, and the
/// fraction strictly above the detection threshold.
#[derive(Debug, Clone, Serialize)]
pub struct FrameScore {
    pub frame: usize,
    pub per_gt_best_iou: Vec<f64>,
    pub mean_iou: f64,
    pub detection_rate: f64,
}

/// Aggregated report over one or more frames.
#[derive(Debug, Clone, Serialize)]
pub struct MatchReport {
    pub mean_iou: f64,
    pub detection_rate: f64,
    pub frames: Vec<FrameScore>,
}

/// Best-IoU-per-ground-truth matching for a single frame. Predictions may
/// serve several ground-truth objects; see [`match_and_score_exclusive`]
/// for the assignment variant.
pub fn match_and_score(pred: &[Mask], gt: &[Mask]) -> Result<MatchReport> {
    let frame = score_frame(0, pred, gt)?;
    Ok(MatchReport {
        mean_iou: frame.mean_iou,
        detection_rate: frame.detection_rate,
        frames: vec![frame],
    })
}

/// Optional exclusive-assignment mode: each prediction may serve at most
/// one ground-truth object, with the assignment chosen to maximize the
/// summed IoU (exact, via dynamic programming over prediction subsets;
/// both sides are bounded by the slot budget in practice).
pub fn match_and_score_exclusive(pred: &[Mask], gt: &[Mask]) -> Result<MatchReport> {
    if gt.is_empty() {
        return Err(Error::EmptyReport("no ground-truth masks"));
    }
    if pred.len() > 20 {
        return Err(Error::InvalidConfig(
            "exclusive matching supports at most 20 predictions".into(),
        ));
    }
    let mut iou = vec![vec![0.0f64; pred.len()]; gt.len()];
    for (gi, g) in gt.iter().enumerate() {
        for (pi, p) in pred.iter().enumerate() {
            iou[gi][pi] = iou2d(p, g)?;
        }
    }
    // frontier[used] = best (summed IoU, per-gt assignment) over the
    // ground-truth objects handled so far, with `used` the set of
    // predictions consumed. Each object either takes a free prediction or
    // stays unmatched.
    let n_subsets = 1usize << pred.len();
    let mut frontier: Vec<Option<(f64, Vec<Option<usize>>)>> = vec![None; n_subsets];
    frontier[0] = Some((0.0, Vec::new()));
    for gi in 0..gt.len() {
        let mut next: Vec<Option<(f64, Vec<Option<usize>>)>> = vec![None; n_subsets];
        for (used, entry) in frontier.iter().enumerate() {
            let Some((score, assignment)) = entry else {
                continue;
            };
            let mut offer = |subset: usize, s: f64, choice: Option<usize>| {
                if next[subset].as_ref().map(|(b, _)| s > *b).unwrap_or(true) {
                    let mut a = assignment.clone();
                    a.push(choice);
                    next[subset] = Some((s, a));
                }
            };
            offer(used, *score, None);
            for pi in 0..pred.len() {
                if used & (1 << pi) == 0 {
                    offer(used | (1 << pi), score + iou[gi][pi], Some(pi));
                }
            }
        }
        frontier = next;
    }
    let (_, assignment) = frontier
        .into_iter()
        .flatten()
        .max_by(|a, b| a.0.partial_cmp(&b.0).expect("finite score"))
        .expect("frontier is never empty");

    let per_gt: Vec<f64> = assignment
        .iter()
        .enumerate()
        .map(|(gi, pi)| pi.map(|p| iou[gi][p]).unwrap_or(0.0))
        .collect();
    let mean_iou = per_gt.iter().sum::<f64>() / per_gt.len() as f64;
    let detection_rate =
        per_gt.iter().filter(|&&v| v > DETECTION_IOU).count() as f64 / per_gt.len() as f64;
    Ok(MatchReport {
        mean_iou,
        detection_rate,
        frames: vec![FrameScore {
            frame: 0,
            per_gt_best_iou: per_gt,
            mean_iou,
            detection_rate,
        }],
    })
}

pub fn score_frame(frame: usize, pred: &[Mask], gt: &[Mask]) -> Result<FrameScore> {
    if gt.is_empty() {
        return Err(Error::EmptyReport("no ground-truth masks"));
    }
    let mut per_gt = Vec::with_capacity(gt.len());
    for g in gt {
        let mut best = 0.0f64;
        for p in pred {
            best = best.max(iou2d(p, g)?);
        }
        per_gt.push(best);
    }
    let mean_iou = per_gt.iter().sum::<f64>() / per_gt.len() as f64;
    let detection_rate =
        per_gt.iter().filter(|&&v| v > DETECTION_IOU).count() as f64 / per_gt.len() as f64;
    Ok(FrameScore {
        frame,
        per_gt_best_iou: per_gt,
        mean_iou,
        detection_rate,
    })
}

/// Pools frame scores, weighting every ground-truth object equally.
pub fn aggregate_frames(frames: Vec<FrameScore>) -> Result<MatchReport> {
    let total: usize = frames.iter().map(|f| f.per_gt_best_iou.len()).sum();
    if total == 0 {
        return Err(Error::EmptyReport("no ground-truth objects in any frame"));
    }
    let sum: f64 = frames.iter().flat_map(|f| f.per_gt_best_iou.iter()).sum();
    let detected = frames
        .iter()
        .flat_map(|f| f.per_gt_best_iou.iter())
        .filter(|&&v| v > DETECTION_IOU)
        .count();
    Ok(MatchReport {
        mean_iou: sum / total as f64,
        detection_rate: detected as f64 / total as f64,
        frames,
    })
}

/// Track-consistent scoring: predicted tracks are paired to ground-truth
/// tracks once for the whole video (greedy on mean mask IoU over
/// co-present frames, exclusive), then every (ground-truth object, frame)
/// is scored against its paired track's mask in that frame. Identity swaps
/// cost detections here, unlike the per-frame best-IoU report.
pub fn score_tracked(
    pred_tracks: &[ObjectTrack],
    gt_tracks: &[ObjectTrack],
) -> Result<MatchReport> {
    if gt_tracks.is_empty() {
        return Err(Error::EmptyReport("no ground-truth tracks"));
    }
    // Mean IoU over co-present frames for every (pred, gt) pair.
    let mut pair_scores: Vec<(f64, usize, usize)> = Vec::new();
    for (pi, pred) in pred_tracks.iter().enumerate() {
        for (gi, gt) in gt_tracks.iter().enumerate() {
            let mut total = 0.0;
            let mut n = 0usize;
            for state in gt.states() {
                if let Some(p) = pred.state_at(state.frame) {
                    total += iou2d(&p.mask, &state.mask)?;
                    n += 1;
                }
            }
            if n > 0 {
                pair_scores.push((total / n as f64, pi, gi));
            }
        }
    }
    pair_scores.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite").then(a.1.cmp(&b.1)));
    let mut gt_assignment: Vec<Option<usize>> = vec![None; gt_tracks.len()];
    let mut pred_taken = vec![false; pred_tracks.len()];
    for (score, pi, gi) in pair_scores {
        if score <= 0.0 || gt_assignment[gi].is_some() || pred_taken[pi] {
            continue;
        }
        gt_assignment[gi] = Some(pi);
        pred_taken[pi] = true;
    }

    let mut frames: Vec<FrameScore> = Vec::new();
    let last_frame = gt_tracks
        .iter()
        .filter_map(|t| t.states().last().map(|s| s.frame))
        .max()
        .unwrap_or(0);
    for f in 0..=last_frame {
        let mut per_gt = Vec::new();
        for (gi, gt) in gt_tracks.iter().enumerate() {
            let Some(state) = gt.state_at(f) else {
                continue;
            };
            if state.mask.count_above(DETECTION_IOU) == 0 {
                continue; // fully occluded: undetectable by definition
            }
            let iou = match gt_assignment[gi] {
                Some(pi) => match pred_tracks[pi].state_at(f) {
                    Some(p) => iou2d(&p.mask, &state.mask)?,
                    None => 0.0,
                },
                None => 0.0,
            };
            per_gt.push(iou);
        }
        if per_gt.is_empty() {
            continue;
        }
        let mean_iou = per_gt.iter().sum::<f64>() / per_gt.len() as f64;
        let detection_rate =
            per_gt.iter().filter(|&&v| v > DETECTION_IOU).count() as f64 / per_gt.len() as f64;
        frames.push(FrameScore {
            frame: f,
            per_gt_best_iou: per_gt,
            mean_iou,
            detection_rate,
        });
    }
    aggregate_frames(frames)
}

/// 3D IoU. Exact slab-intersection volume ratio when both boxes are
/// axis-aligned; otherwise Monte Carlo over the union's bounding box with
/// a fixed seed.
pub fn iou3d(a: &Cuboid, b: &Cuboid, samples: usize) -> f64 {
    let axis_aligned =
        a.rotation.iter().all(|v| v.abs() < 1e-12) && b.rotation.iter().all(|v| v.abs() < 1e-12);
    if axis_aligned {
        return iou3d_axis_aligned(a, b);
    }
    iou3d_monte_carlo(a, b, samples)
}

fn iou3d_axis_aligned(a: &Cuboid, b: &Cuboid) -> f64 {
    let (alo, ahi) = a.aabb();
    let (blo, bhi) = b.aabb();
    let mut intersection = 1.0;
    for i in 0..3 {
        let overlap = (ahi[i].min(bhi[i]) - alo[i].max(blo[i])).max(0.0);
        intersection *= overlap;
    }
    let union = a.volume() + b.volume() - intersection;
    if union <= 0.0 {
        return 0.0;
    }
    intersection / union
}

fn iou3d_monte_carlo(a: &Cuboid, b: &Cuboid, samples: usize) -> f64 {
    let (alo, ahi) = a.aabb();
    let (blo, bhi) = b.aabb();
    let lo = alo.inf(&blo);
    let hi = ahi.sup(&bhi);
    let mut rng = ChaCha8Rng::seed_from_u64(MONTE_CARLO_SEED);
    let mut in_a = 0usize;
    let mut in_b = 0usize;
    let mut in_both = 0usize;
    for _ in 0..samples.max(1) {
        let p = Vector3::new(
            rng.random_range(lo.x..=hi.x),
            rng.random_range(lo.y..=hi.y),
            rng.random_range(lo.z..=hi.z),
        );
        let pa = a.contains(&p);
        let pb = b.contains(&p);
        in_a += pa as usize;
        in_b += pb as usize;
        in_both += (pa && pb) as usize;
    }
    let union = in_a + in_b - in_both;
    if union == 0 {
        return 0.0;
    }
    in_both as f64 / union as f64
}

/// Fraction of ground-truth cuboids whose best 3D IoU over predictions
/// strictly exceeds `threshold`.
pub fn recall3d(pred: &[Cuboid], gt: &[Cuboid], threshold: f64) -> Result<f64> {
    if gt.is_empty() {
        return Err(Error::EmptyReport("no ground-truth cuboids"));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidConfig(
            "recall threshold must be in (0, 1)".into(),
        ));
    }
    let recalled = gt
        .iter()
        .filter(|g| {
            pred.iter()
                .any(|p| iou3d(p, g, DEFAULT_IOU3D_SAMPLES) > threshold)
        })
        .count();
    Ok(recalled as f64 / gt.len() as f64)
}

/// Least-squares affine map fitted from predicted to ground-truth
/// translations.
#[derive(Debug, Clone, Serialize)]
pub struct AffineTransform {
    pub matrix: [[f64; 3]; 3],
    pub offset: [f64; 3],
}

impl AffineTransform {
    pub fn apply(&self, v: &Vector3<f64>) -> Vector3<f64> {
        let m = Matrix3::from_fn(|r, c| self.matrix[r][c]);
        m * v + Vector3::new(self.offset[0], self.offset[1], self.offset[2])
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CorrelationReport {
    pub per_axis_r: [f64; 3],
    pub pooled_r: f64,
    pub n_fit: usize,
    pub n_eval: usize,
}

/// Matches predicted to ground-truth cuboids frame by frame via mask IoU
/// (best above 0.2), fits an affine alignment on the even-indexed matches
/// and reports Pearson correlation on the odd-indexed remainder.
pub fn align_and_correlate(
    pred_tracks: &[ObjectTrack],
    gt_tracks: &[ObjectTrack],
) -> Result<(AffineTransform, CorrelationReport)> {
    let mut pairs: Vec<(Vector3<f64>, Vector3<f64>)> = Vec::new();
    let last_frame = gt_tracks
        .iter()
        .filter_map(|t| t.states().last().map(|s| s.frame))
        .max()
        .unwrap_or(0);
    for f in 0..=last_frame {
        for gt in gt_tracks {
            let Some(g) = gt.state_at(f) else { continue };
            let mut best: Option<(f64, Vector3<f64>)> = None;
            for pred in pred_tracks {
                if let Some(p) = pred.state_at(f) {
                    let iou = iou2d(&p.mask, &g.mask)?;
                    if iou > 0.2 && best.map(|(b, _)| iou > b).unwrap_or(true) {
                        best = Some((iou, p.cuboid.translation));
                    }
                }
            }
            if let Some((_, t)) = best {
                pairs.push((t, g.cuboid.translation));
            }
        }
    }
    align_and_correlate_pairs(&pairs)
}

/// Core fit on explicit (predicted, ground-truth) translation pairs.
pub fn align_and_correlate_pairs(
    pairs: &[(Vector3<f64>, Vector3<f64>)],
) -> Result<(AffineTransform, CorrelationReport)> {
    if pairs.len() < 4 {
        return Err(Error::DegenerateFit("need at least 4 matched pairs"));
    }
    let fit: Vec<_> = pairs.iter().step_by(2).collect();
    let eval: Vec<_> = pairs.iter().skip(1).step_by(2).collect();
    if fit.len() < 4 || eval.is_empty() {
        return Err(Error::DegenerateFit("not enough pairs for a split fit"));
    }

    // Normal equations on homogeneous coordinates: X beta = Y per output
    // axis, beta stacked into [A | b].
    let mut xtx = Matrix4::<f64>::zeros();
    let mut xty = [Vector4::<f64>::zeros(); 3];
    for (p, g) in &fit {
        let x = Vector4::new(p.x, p.y, p.z, 1.0);
        xtx += x * x.transpose();
        for axis in 0..3 {
            xty[axis] += x * g[axis];
        }
    }
    let inv = xtx
        .try_inverse()
        .ok_or(Error::DegenerateFit("rank-deficient design matrix"))?;
    // Guard against nearly singular systems that still invert numerically.
    let svd = DMatrix::from_fn(4, 4, |r, c| xtx[(r, c)]).svd(false, false);
    let sv: &DVector<f64> = &svd.singular_values;
    if sv[sv.len() - 1] <= 1e-9 * sv[0] {
        return Err(Error::DegenerateFit("rank-deficient design matrix"));
    }

    let mut matrix = [[0.0; 3]; 3];
    let mut offset = [0.0; 3];
    for axis in 0..3 {
        let beta = inv * xty[axis];
        matrix[axis] = [beta.x, beta.y, beta.z];
        offset[axis] = beta.w;
    }
    let transform = AffineTransform { matrix, offset };

    let mut per_axis_r = [0.0f64; 3];
    let mut pooled_a: Vec<f64> = Vec::new();
    let mut pooled_b: Vec<f64> = Vec::new();
    for axis in 0..3 {
        let xs: Vec<f64> = eval.iter().map(|(p, _)| transform.apply(p)[axis]).collect();
        let ys: Vec<f64> = eval.iter().map(|(_, g)| g[axis]).collect();
        per_axis_r[axis] = pearson(&xs, &ys);
        pooled_a.extend(xs);
        pooled_b.extend(ys);
    }
    let report = CorrelationReport {
        per_axis_r,
        pooled_r: pearson(&pooled_a, &pooled_b),
        n_fit: fit.len(),
        n_eval: eval.len(),
    };
    Ok((transform, report))
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    if n < 2.0 {
        return 0.0;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va <= 1e-15 || vb <= 1e-15 {
        return 0.0;
    }
    cov / (va.sqrt() * vb.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn square(w: usize, h: usize, x0: usize, y0: usize, side: usize) -> Mask {
        Mask::from_fn(w, h, |x, y| {
            if (x0..x0 + side).contains(&x) && (y0..y0 + side).contains(&y) {
                1.0
            } else {
                0.0
            }
        })
    }

    #[test]
    fn iou2d_identical() {
        let m = square(20, 20, 3, 3, 10);
        assert_relative_eq!(iou2d(&m, &m).unwrap(), 1.0);
    }

    #[test]
    fn iou2d_disjoint_and_empty() {
        let a = square(20, 20, 0, 0, 5);
        let b = square(20, 20, 10, 10, 5);
        assert_relative_eq!(iou2d(&a, &b).unwrap(), 0.0);
        let z = Mask::zeros(20, 20);
        assert_relative_eq!(iou2d(&z, &z).unwrap(), 0.0);
    }

    #[test]
    fn iou2d_shifted_square_is_third() {
        // 10x10 square shifted 5 columns: 50 shared / 150 union.
        let a = square(30, 30, 5, 5, 10);
        let b = square(30, 30, 10, 5, 10);
        assert_relative_eq!(iou2d(&a, &b).unwrap(), 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn match_perfect_predictions() {
        let gt = vec![square(20, 20, 2, 2, 6), square(20, 20, 12, 12, 5)];
        let report = match_and_score(&gt, &gt).unwrap();
        assert_relative_eq!(report.mean_iou, 1.0);
        assert_relative_eq!(report.detection_rate, 1.0);
    }

    #[test]
    fn union_prediction_halves_iou() {
        // One prediction covering two equal disjoint gt squares: each gt
        // object sees IoU 0.5, detection 0 under the strict threshold.
        let g1 = square(30, 30, 2, 2, 8);
        let g2 = square(30, 30, 16, 16, 8);
        let both = g1.union(&g2).unwrap();
        let report = match_and_score(&[both], &[g1, g2]).unwrap();
        assert_relative_eq!(report.mean_iou, 0.5, epsilon = 1e-12);
        assert_relative_eq!(report.detection_rate, 0.0);
    }

    #[test]
    fn exclusive_matching_cannot_reuse_predictions() {
        // One prediction sitting on gt A: reusable matching credits both
        // objects with whatever it overlaps; exclusive matching can serve
        // only one.
        let g1 = square(30, 30, 2, 2, 8);
        let g2 = square(30, 30, 2, 12, 8);
        let union = g1.union(&g2).unwrap();
        let reusable = match_and_score(&[union.clone()], &[g1.clone(), g2.clone()]).unwrap();
        let exclusive = match_and_score_exclusive(&[union], &[g1.clone(), g2.clone()]).unwrap();
        assert_relative_eq!(reusable.mean_iou, 0.5, epsilon = 1e-12);
        assert_relative_eq!(exclusive.mean_iou, 0.25, epsilon = 1e-12);
        // With one prediction per object both modes agree.
        let both = match_and_score_exclusive(&[g1.clone(), g2.clone()], &[g1, g2]).unwrap();
        assert_relative_eq!(both.mean_iou, 1.0);
    }

    #[test]
    fn exclusive_matching_picks_optimal_assignment() {
        // Greedy-by-first-gt would give gt1 its best (the shared mask) and
        // leave gt2 poorly matched; the optimal assignment swaps.
        let gt1 = square(30, 30, 0, 0, 10);
        let gt2 = square(30, 30, 6, 0, 10);
        let pred_a = square(30, 30, 4, 0, 10); // decent for both
        let pred_b = square(30, 30, 0, 0, 9); // good for gt1 only
        let report = match_and_score_exclusive(&[pred_a, pred_b], &[gt1, gt2]).unwrap();
        // Optimal: pred_b -> gt1, pred_a -> gt2.
        let per = &report.frames[0].per_gt_best_iou;
        assert!(per[0] > 0.7, "gt1 got {}", per[0]);
        assert!(per[1] > 0.5, "gt2 got {}", per[1]);
    }

    #[test]
    fn replacing_prediction_with_its_gt_never_lowers_mean_iou() {
        let gt = vec![square(30, 30, 2, 2, 8), square(30, 30, 14, 14, 9)];
        let pred = vec![square(30, 30, 3, 3, 8), square(30, 30, 15, 15, 8)];
        let before = match_and_score(&pred, &gt).unwrap();
        // Replace the first prediction by the gt mask it best matches.
        let replaced = vec![gt[0].clone(), pred[1].clone()];
        let after = match_and_score(&replaced, &gt).unwrap();
        assert!(after.mean_iou >= before.mean_iou);
    }

    #[test]
    fn iou_grows_as_subset_prediction_dilates() {
        let gt = square(30, 30, 5, 5, 12);
        let mut last = 0.0;
        for side in [4usize, 6, 8, 10, 12] {
            let pred = square(30, 30, 5, 5, side);
            let iou = iou2d(&pred, &gt).unwrap();
            assert!(iou >= last, "dilation decreased IoU");
            last = iou;
        }
        assert_relative_eq!(last, 1.0);
    }

    #[test]
    fn no_predictions_scores_zero() {
        let gt = vec![square(20, 20, 2, 2, 6)];
        let report = match_and_score(&[], &gt).unwrap();
        assert_relative_eq!(report.mean_iou, 0.0);
        assert_relative_eq!(report.detection_rate, 0.0);
    }

    #[test]
    fn empty_gt_errors() {
        assert!(matches!(
            match_and_score(&[Mask::ones(4, 4)], &[]),
            Err(Error::EmptyReport(_))
        ));
    }

    fn cube(x: f64, rot: f64) -> Cuboid {
        Cuboid::new(
            Vector3::new(x, 0.0, 0.0),
            Vector3::new(1.0, 1.0, 1.0),
            Vector3::new(0.0, 0.0, rot),
        )
        .unwrap()
    }

    #[test]
    fn iou3d_identical_is_one() {
        let c = cube(0.0, 0.0);
        assert_relative_eq!(iou3d(&c, &c, 1000), 1.0);
        // The Monte Carlo path is exact for identical boxes too.
        let r = cube(0.0, 0.4);
        assert_relative_eq!(iou3d(&r, &r, 1000), 1.0);
    }

    #[test]
    fn iou3d_offset_cubes_exact() {
        // Unit cubes offset by 0.5 on x: intersection 0.5, union 1.5.
        let a = cube(0.0, 0.0);
        let b = cube(0.5, 0.0);
        assert_relative_eq!(iou3d(&a, &b, 10), 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn iou3d_disjoint_is_zero() {
        let a = cube(0.0, 0.0);
        let b = cube(5.0, 0.0);
        assert_relative_eq!(iou3d(&a, &b, 1000), 0.0);
        let rot = cube(5.0, 0.7);
        assert_relative_eq!(iou3d(&a, &rot, 1000), 0.0);
    }

    #[test]
    fn monte_carlo_matches_exact_on_aligned_boxes() {
        // Force the Monte Carlo path with a negligible rotation and compare
        // against the exact slab value.
        let a = cube(0.0, 0.0);
        let mut b = cube(0.5, 0.0);
        b.rotation.z = 1e-9;
        let exact = 1.0 / 3.0;
        let mc = iou3d(&a, &b, DEFAULT_IOU3D_SAMPLES);
        assert!((mc - exact).abs() < 0.02, "mc = {mc}");
    }

    #[test]
    fn recall3d_counts() {
        let gt = vec![cube(0.0, 0.0), cube(4.0, 0.0)];
        let pred = vec![cube(0.1, 0.0)];
        assert_relative_eq!(recall3d(&pred, &gt, RECALL3D_IOU).unwrap(), 0.5);
        assert_relative_eq!(recall3d(&gt, &gt, RECALL3D_IOU).unwrap(), 1.0);
        assert_relative_eq!(recall3d(&[], &gt, RECALL3D_IOU).unwrap(), 0.0);
        assert!(recall3d(&pred, &[], RECALL3D_IOU).is_err());
    }

    fn random_pairs(
        n: usize,
        seed: u64,
        f: impl Fn(&Vector3<f64>, &mut ChaCha8Rng) -> Vector3<f64>,
    ) -> Vec<(Vector3<f64>, Vector3<f64>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let g = Vector3::new(
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-5.0..5.0),
                );
                let p = f(&g, &mut rng);
                (p, g)
            })
            .collect()
    }

    #[test]
    fn exact_pairs_give_identity_and_r1() {
        let pairs = random_pairs(40, 1, |g, _| *g);
        let (t, r) = align_and_correlate_pairs(&pairs).unwrap();
        for axis in 0..3 {
            assert_relative_eq!(t.matrix[axis][axis], 1.0, epsilon = 1e-9);
            assert_relative_eq!(t.offset[axis], 0.0, epsilon = 1e-9);
            assert_relative_eq!(r.per_axis_r[axis], 1.0, epsilon = 1e-9);
        }
        assert_relative_eq!(r.pooled_r, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn affine_distortion_recovered() {
        let pairs = random_pairs(40, 2, |g, _| g * 2.0 + Vector3::new(1.0, -3.0, 0.5));
        // Note pairs are (pred, gt) with pred = 2 gt + c, so the fit maps
        // pred back onto gt and correlation is perfect.
        let (_, r) = align_and_correlate_pairs(&pairs).unwrap();
        assert_relative_eq!(r.pooled_r, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn independent_noise_has_low_correlation() {
        let pairs = random_pairs(400, 3, |_, rng| {
            Vector3::new(
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
            )
        });
        let (_, r) = align_and_correlate_pairs(&pairs).unwrap();
        assert!(r.pooled_r.abs() < 0.2, "pooled r = {}", r.pooled_r);
    }

    #[test]
    fn degenerate_fit_errors() {
        // Collinear predictions: rank-deficient design matrix.
        let pairs: Vec<_> = (0..10)
            .map(|i| {
                let v = Vector3::new(i as f64, 0.0, 0.0);
                (v, v)
            })
            .collect();
        assert!(matches!(
            align_and_correlate_pairs(&pairs),
            Err(Error::DegenerateFit(_))
        ));
    }

    proptest! {
        #[test]
        fn iou2d_symmetric(
            a in proptest::collection::vec(0.0f64..=1.0, 25),
            b in proptest::collection::vec(0.0f64..=1.0, 25),
        ) {
            let ma = Mask::from_weights(5, 5, a).unwrap();
            let mb = Mask::from_weights(5, 5, b).unwrap();
            let ab = iou2d(&ma, &mb).unwrap();
            let ba = iou2d(&mb, &ma).unwrap();
            prop_assert!((ab - ba).abs() < 1e-15);
            prop_assert!((0.0..=1.0).contains(&ab));
        }

        #[test]
        fn iou3d_exact_matches_brute_slab(
            ax in -1.0f64..1.0, ay in -1.0f64..1.0, az in -1.0f64..1.0,
            sx in 0.5f64..2.0, sy in 0.5f64..2.0, sz in 0.5f64..2.0,
        ) {
            let a = Cuboid::axis_aligned(Vector3::zeros(), Vector3::new(1.5, 1.5, 1.5)).unwrap();
            let b = Cuboid::axis_aligned(
                Vector3::new(ax, ay, az),
                Vector3::new(sx, sy, sz),
            ).unwrap();
            // Independent slab computation.
            let mut inter = 1.0;
            for i in 0..3 {
                let alo = a.translation[i] - a.size[i] / 2.0;
                let ahi = a.translation[i] + a.size[i] / 2.0;
                let blo = b.translation[i] - b.size[i] / 2.0;
                let bhi = b.translation[i] + b.size[i] / 2.0;
                inter *= (ahi.min(bhi) - alo.max(blo)).max(0.0);
            }
            let expect = inter / (a.volume() + b.volume() - inter);
            prop_assert!((iou3d(&a, &b, 10) - expect).abs() < 1e-12);
        }
    }
}
