//! 2D <-> 3D: mask-to-cuboid backprojection, cuboid-to-mask projection, and
//! depth-ordered rendering with a shrinking palette.
//!
//! Backprojection follows the manual recipe: soft 2D bounds from the most
//! extreme mask pixels, a depth heuristic that is linear in the normalized
//! bottom bound (objects whose lowest pixel sits higher in the image are
//! further away), and inverse intrinsics to recover center and x/y extent.
//! Rotation and z-extent are fixed by configuration; the depth slope alpha
//! is calibrated per dataset by least squares.

use nalgebra::{Vector2, Vector3};

use crate::camera::Camera;
use crate::cuboid::Cuboid;
use crate::error::{Error, Result};
use crate::mask::Mask;

#[derive(Debug, Clone)]
pub struct BackprojectionConfig {
    /// Depth slope: world units per unit of normalized bottom bound.
    pub alpha: f64,
    /// How many extreme pixels enter each soft bound (default 200).
    pub boundary_count: usize,
    /// Euler rotation assigned to every backprojected cuboid.
    pub fixed_rotation: Vector3<f64>,
    /// z edge length assigned to every backprojected cuboid.
    pub fixed_z_size: f64,
}

impl Default for BackprojectionConfig {
    fn default() -> Self {
        BackprojectionConfig {
            alpha: 10.0,
            boundary_count: 200,
            fixed_rotation: Vector3::zeros(),
            fixed_z_size: 1.0,
        }
    }
}

impl BackprojectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidConfig("alpha must be positive".into()));
        }
        if self.boundary_count == 0 {
            return Err(Error::InvalidConfig(
                "boundary_count must be at least 1".into(),
            ));
        }
        if !(self.fixed_z_size > 0.0) {
            return Err(Error::InvalidConfig("fixed_z_size must be positive".into()));
        }
        Ok(())
    }
}

/// Soft 2D bounds of a mask: for each direction, the weight-weighted mean
/// coordinate of the `boundary_count` most extreme pixels among those with
/// weight above 0.5. Returns `(x_min, x_max, y_min, y_max)` in pixel
/// coordinates (x right, y down).
///
/// The count is calibrated to the mask scale: feeding a mask with fewer
/// pixels than `boundary_count` averages everything into all four bounds
/// and the caller gets a degenerate extent. Scale the count down with the
/// image (see the pipeline's automatic scaling) for small resolutions.
pub fn soft_bounds(mask: &Mask, boundary_count: usize) -> Result<(f64, f64, f64, f64)> {
    if mask.total_weight() <= 0.0 {
        return Err(Error::EmptyMask("soft_bounds needs positive mask weight"));
    }
    let mut pixels: Vec<(usize, usize, f64)> = Vec::new();
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            let w = mask.get(x, y);
            if w > 0.5 {
                pixels.push((x, y, w));
            }
        }
    }
    if pixels.is_empty() {
        return Err(Error::EmptyMask("no mask pixels above 0.5"));
    }
    let n = boundary_count.min(pixels.len());
    let weighted_mean = |selected: &[(usize, usize, f64)],
                         coord: fn(&(usize, usize, f64)) -> f64| {
        let total: f64 = selected.iter().map(|p| p.2).sum();
        selected.iter().map(|p| coord(p) * p.2).sum::<f64>() / total
    };

    // Stable secondary ordering keeps tie handling deterministic.
    let mut by_x = pixels.clone();
    by_x.sort_by_key(|a| (a.0, a.1));
    let x_min = weighted_mean(&by_x[..n], |p| p.0 as f64);
    let x_max = weighted_mean(&by_x[by_x.len() - n..], |p| p.0 as f64);

    let mut by_y = pixels;
    by_y.sort_by_key(|a| (a.1, a.0));
    let y_min = weighted_mean(&by_y[..n], |p| p.1 as f64);
    let y_max = weighted_mean(&by_y[by_y.len() - n..], |p| p.1 as f64);

    Ok((x_min, x_max, y_min, y_max))
}

/// Normalized bottom bound used by the depth heuristic: the mask's lowest
/// extent measured upward from the bottom row, divided by the image height.
/// Shifting a mask up in the image increases this value.
pub fn normalized_bottom_bound(y_max: f64, image_height: usize) -> f64 {
    (image_height as f64 - 1.0 - y_max) / image_height as f64
}

/// Recovers a cuboid from a segmentation mask. Depth comes from
/// `t_z = 1 + alpha * y_hat` with `y_hat` the normalized bottom bound; the
/// four soft bounds are back-cast through the inverse intrinsics at that
/// depth, the center sits halfway between the extremes, and x/y sizes are
/// the extremes' spread. Rotation and z size come from the configuration.
pub fn backproject_manual(mask: &Mask, cam: &Camera, cfg: &BackprojectionConfig) -> Result<Cuboid> {
    cfg.validate()?;
    let (x_min, x_max, y_min, y_max) = soft_bounds(mask, cfg.boundary_count)?;
    if x_max - x_min < 1e-9 || y_max - y_min < 1e-9 {
        return Err(Error::DegenerateExtent("mask bounds have zero spread"));
    }
    let y_hat = normalized_bottom_bound(y_max, cam.height());
    let t_z = 1.0 + cfg.alpha * y_hat;
    if t_z <= 0.0 {
        return Err(Error::DegenerateExtent(
            "backprojected depth is not positive",
        ));
    }

    let lo = cam.backcast(x_min, y_min, t_z);
    let hi = cam.backcast(x_max, y_max, t_z);
    let center_cam = Vector3::new((lo.x + hi.x) / 2.0, (lo.y + hi.y) / 2.0, t_z);
    let size = Vector3::new(hi.x - lo.x, hi.y - lo.y, cfg.fixed_z_size);
    Cuboid::new(cam.camera_to_world(&center_cam), size, cfg.fixed_rotation)
}

/// Projects a cuboid through the pinhole model and rasterizes the filled
/// convex hull of its eight corner projections as a hard mask. A pixel is
/// filled iff its center lies in the hull; pixels outside the image are
/// clipped. Errors if any corner is at or behind the camera plane.
pub fn project(cuboid: &Cuboid, cam: &Camera) -> Result<Mask> {
    let mut points = Vec::with_capacity(8);
    for corner in cuboid.corners() {
        let p = cam.world_to_camera(&corner);
        if p.z <= 0.0 {
            return Err(Error::BehindCamera(p.z));
        }
        points.push(cam.project_camera_point(&p)?);
    }
    let hull = convex_hull(&points);
    Ok(rasterize_convex(&hull, cam.width(), cam.height()))
}

/// Renders every cuboid's visible mask: sorted by camera distance, each
/// object receives the remaining palette times its projection, and the
/// palette shrinks accordingly. Masks come back in the input order.
pub fn render_all(cuboids: &[Cuboid], cam: &Camera) -> Result<Vec<Mask>> {
    Ok(render_with_palette(cuboids, cam)?.0)
}

/// [`render_all`] plus the final palette (the per-pixel budget left after
/// all objects rendered); useful for conservation checks and background
/// composition.
pub fn render_with_palette(cuboids: &[Cuboid], cam: &Camera) -> Result<(Vec<Mask>, Mask)> {
    let mut order: Vec<usize> = (0..cuboids.len()).collect();
    let distance = |c: &Cuboid| cam.world_to_camera(&c.translation).norm();
    order.sort_by(|&a, &b| {
        distance(&cuboids[a])
            .partial_cmp(&distance(&cuboids[b]))
            .expect("finite distances")
            .then(a.cmp(&b))
    });

    let mut palette = Mask::ones(cam.width(), cam.height());
    let mut masks = vec![Mask::zeros(cam.width(), cam.height()); cuboids.len()];
    for &i in &order {
        let projection = project(&cuboids[i], cam)?;
        masks[i] = palette.mul(&projection)?;
        palette = palette.mul(&projection.complement())?;
    }
    Ok((masks, palette))
}

/// Fits the depth slope `alpha` for `t_z = 1 + alpha * y_hat` by least
/// squares over `(y_hat, true depth)` pairs.
pub fn calibrate_alpha(samples: &[(f64, f64)]) -> Result<f64> {
    let num: f64 = samples.iter().map(|(y, z)| y * (z - 1.0)).sum();
    let den: f64 = samples.iter().map(|(y, _)| y * y).sum();
    if den <= 1e-12 {
        return Err(Error::DegenerateFit("all bottom bounds are zero"));
    }
    let alpha = num / den;
    if !(alpha > 0.0) {
        return Err(Error::DegenerateFit("fitted alpha is not positive"));
    }
    Ok(alpha)
}

/// Convenience calibration from mask/depth observations.
pub fn calibrate_alpha_from_masks(observations: &[(Mask, f64)], cam: &Camera) -> Result<f64> {
    let mut samples = Vec::with_capacity(observations.len());
    for (mask, depth) in observations {
        let (_, _, _, y_max) = soft_bounds(mask, 200)?;
        samples.push((normalized_bottom_bound(y_max, cam.height()), *depth));
    }
    calibrate_alpha(&samples)
}

/// Andrew's monotone chain.
fn convex_hull(points: &[Vector2<f64>]) -> Vec<Vector2<f64>> {
    let mut pts: Vec<Vector2<f64>> = points.to_vec();
    pts.sort_by(|a, b| (a.x, a.y).partial_cmp(&(b.x, b.y)).expect("finite points"));
    pts.dedup_by(|a, b| (a.x - b.x).abs() < 1e-12 && (a.y - b.y).abs() < 1e-12);
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>| {
        (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
    };
    let mut lower: Vec<Vector2<f64>> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= 0.0
        {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<Vector2<f64>> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= 0.0
        {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Scanline fill of a convex polygon: pixel centers at (x + 0.5, y + 0.5).
fn rasterize_convex(hull: &[Vector2<f64>], width: usize, height: usize) -> Mask {
    let mut mask = Mask::zeros(width, height);
    if hull.len() < 3 {
        return mask;
    }
    let y_lo = hull.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let y_hi = hull.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    let row_start = ((y_lo - 0.5).ceil().max(0.0)) as usize;
    let row_end = (((y_hi - 0.5).floor()).min(height as f64 - 1.0)) as isize;
    if row_end < 0 {
        return mask;
    }
    for y in row_start..=(row_end as usize) {
        let yc = y as f64 + 0.5;
        let mut x_lo = f64::INFINITY;
        let mut x_hi = f64::NEG_INFINITY;
        for i in 0..hull.len() {
            let a = hull[i];
            let b = hull[(i + 1) % hull.len()];
            let (lo, hi) = if a.y <= b.y { (a, b) } else { (b, a) };
            if yc < lo.y || yc > hi.y || (hi.y - lo.y).abs() < 1e-12 {
                continue;
            }
            let t = (yc - lo.y) / (hi.y - lo.y);
            let x = lo.x + t * (hi.x - lo.x);
            x_lo = x_lo.min(x);
            x_hi = x_hi.max(x);
        }
        if x_lo > x_hi {
            continue;
        }
        let col_start = ((x_lo - 0.5).ceil().max(0.0)) as usize;
        let col_end = ((x_hi - 0.5).floor()).min(width as f64 - 1.0) as isize;
        if col_end < 0 {
            continue;
        }
        for x in col_start..=(col_end as usize) {
            mask.set(x, y, 1.0);
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn soft_bounds_all_ones_200() {
        // 100x100 all-ones mask: the 200 left-most pixels are the full
        // columns 0 and 1, whose mean column is 0.5. By symmetry the other
        // bounds mirror it.
        let m = Mask::ones(100, 100);
        let (x_min, x_max, y_min, y_max) = soft_bounds(&m, 200).unwrap();
        assert_relative_eq!(x_min, 0.5, epsilon = 1e-12);
        assert_relative_eq!(x_max, 98.5, epsilon = 1e-12);
        assert_relative_eq!(y_min, 0.5, epsilon = 1e-12);
        assert_relative_eq!(y_max, 98.5, epsilon = 1e-12);
    }

    #[test]
    fn soft_bounds_exact_box_with_small_count() {
        let m = Mask::from_fn(100, 100, |x, y| {
            if (40..60).contains(&x) && (40..60).contains(&y) {
                1.0
            } else {
                0.0
            }
        });
        let (x_min, x_max, y_min, y_max) = soft_bounds(&m, 20).unwrap();
        assert_relative_eq!(x_min, 40.0);
        assert_relative_eq!(x_max, 59.0);
        assert_relative_eq!(y_min, 40.0);
        assert_relative_eq!(y_max, 59.0);
    }

    #[test]
    fn soft_bounds_invariant_to_uniform_scaling() {
        let soft = Mask::from_fn(50, 50, |x, y| {
            if (10..30).contains(&x) && (15..35).contains(&y) {
                0.9
            } else {
                0.0
            }
        });
        let scaled = Mask::from_fn(50, 50, |x, y| soft.get(x, y) * 0.8);
        let a = soft_bounds(&soft, 40).unwrap();
        let b = soft_bounds(&scaled, 40).unwrap();
        assert_relative_eq!(a.0, b.0);
        assert_relative_eq!(a.3, b.3);
    }

    #[test]
    fn soft_bounds_empty_mask_errors() {
        assert!(matches!(
            soft_bounds(&Mask::zeros(10, 10), 5),
            Err(Error::EmptyMask(_))
        ));
    }

    fn test_camera() -> Camera {
        Camera::identity_pose(100.0, 200, 200)
    }

    #[test]
    fn project_unit_cuboid_is_centered_square() {
        let cam = test_camera();
        let c = Cuboid::axis_aligned(
            nalgebra::Vector3::new(0.0, 0.0, 10.0),
            nalgebra::Vector3::new(1.0, 1.0, 1.0),
        )
        .unwrap();
        let mask = project(&c, &cam).unwrap();
        // The front face at z = 9.5 projects to half-width 100 * 0.5 / 9.5
        // = 5.26 px, so the square side should be about 10-11 px.
        let area = mask.count_above(0.5);
        let side = (area as f64).sqrt();
        assert!(
            (side - 10.0).abs() <= 1.0,
            "side = {side}, expected about 10"
        );
        // Centered: bounds symmetric about 100.
        let (x_min, x_max, _, _) = soft_bounds(&mask, 1000).unwrap();
        assert_relative_eq!((x_min + x_max) / 2.0, 99.5, epsilon = 1.0);
    }

    #[test]
    fn doubling_depth_halves_side() {
        let cam = test_camera();
        let near = Cuboid::axis_aligned(
            nalgebra::Vector3::new(0.0, 0.0, 10.0),
            nalgebra::Vector3::new(1.0, 1.0, 1.0),
        )
        .unwrap();
        let far = Cuboid::axis_aligned(
            nalgebra::Vector3::new(0.0, 0.0, 20.0),
            nalgebra::Vector3::new(1.0, 1.0, 1.0),
        )
        .unwrap();
        let side_near = (project(&near, &cam).unwrap().count_above(0.5) as f64).sqrt();
        let side_far = (project(&far, &cam).unwrap().count_above(0.5) as f64).sqrt();
        assert!((side_near / 2.0 - side_far).abs() <= 1.0);
    }

    #[test]
    fn outside_frustum_is_empty_mask() {
        let cam = test_camera();
        let c = Cuboid::axis_aligned(
            nalgebra::Vector3::new(100.0, 0.0, 10.0),
            nalgebra::Vector3::new(1.0, 1.0, 1.0),
        )
        .unwrap();
        assert_eq!(project(&c, &cam).unwrap().count_above(0.5), 0);
    }

    #[test]
    fn corner_behind_camera_errors() {
        let cam = test_camera();
        let c = Cuboid::axis_aligned(
            nalgebra::Vector3::new(0.0, 0.0, 0.4),
            nalgebra::Vector3::new(1.0, 1.0, 1.0),
        )
        .unwrap();
        assert!(matches!(project(&c, &cam), Err(Error::BehindCamera(_))));
    }

    #[test]
    fn render_single_equals_project() {
        let cam = test_camera();
        let c = Cuboid::axis_aligned(
            nalgebra::Vector3::new(0.2, -0.1, 8.0),
            nalgebra::Vector3::new(1.0, 1.5, 1.0),
        )
        .unwrap();
        let direct = project(&c, &cam).unwrap();
        let rendered = render_all(&[c], &cam).unwrap();
        assert_eq!(rendered[0].weights(), direct.weights());
    }

    #[test]
    fn nearer_object_occludes() {
        let cam = test_camera();
        let near = Cuboid::axis_aligned(
            nalgebra::Vector3::new(0.0, 0.0, 2.0),
            nalgebra::Vector3::new(0.5, 0.5, 0.5),
        )
        .unwrap();
        let far = Cuboid::axis_aligned(
            nalgebra::Vector3::new(0.0, 0.0, 4.0),
            nalgebra::Vector3::new(1.0, 1.0, 0.5),
        )
        .unwrap();
        // Input order is far-first; render must still give the near object
        // its full projection.
        let masks = render_all(&[far, near], &cam).unwrap();
        let near_proj = project(&near, &cam).unwrap();
        assert_eq!(masks[1].weights(), near_proj.weights());
        // The far mask is zero wherever the near projection covers it.
        for (m, p) in masks[0].weights().iter().zip(near_proj.weights()) {
            if *p > 0.5 {
                assert_eq!(*m, 0.0);
            }
        }
    }

    #[test]
    fn disjoint_projections_independent() {
        let cam = test_camera();
        let a = Cuboid::axis_aligned(
            nalgebra::Vector3::new(-3.0, 0.0, 8.0),
            nalgebra::Vector3::new(1.0, 1.0, 1.0),
        )
        .unwrap();
        let b = Cuboid::axis_aligned(
            nalgebra::Vector3::new(3.0, 0.0, 8.0),
            nalgebra::Vector3::new(1.0, 1.0, 1.0),
        )
        .unwrap();
        let masks = render_all(&[a, b], &cam).unwrap();
        assert_eq!(masks[0].weights(), project(&a, &cam).unwrap().weights());
        assert_eq!(masks[1].weights(), project(&b, &cam).unwrap().weights());
    }

    #[test]
    fn render_masks_independent_of_input_order() {
        let cam = test_camera();
        let cuboids: Vec<Cuboid> = (0..3)
            .map(|i| {
                Cuboid::axis_aligned(
                    nalgebra::Vector3::new(i as f64 - 1.0, 0.0, 5.0 + 2.0 * i as f64),
                    nalgebra::Vector3::new(1.5, 1.5, 1.0),
                )
                .unwrap()
            })
            .collect();
        let forward = render_all(&cuboids, &cam).unwrap();
        let reversed: Vec<Cuboid> = cuboids.iter().rev().copied().collect();
        let backward = render_all(&reversed, &cam).unwrap();
        for i in 0..3 {
            assert_eq!(forward[i].weights(), backward[2 - i].weights());
        }
    }

    #[test]
    fn palette_conservation() {
        let cam = test_camera();
        let cuboids: Vec<Cuboid> = (0..4)
            .map(|i| {
                Cuboid::axis_aligned(
                    nalgebra::Vector3::new(i as f64 - 1.5, 0.0, 4.0 + i as f64),
                    nalgebra::Vector3::new(1.2, 1.2, 0.8),
                )
                .unwrap()
            })
            .collect();
        let (masks, palette) = render_with_palette(&cuboids, &cam).unwrap();
        for y in 0..cam.height() {
            for x in 0..cam.width() {
                let sum: f64 = masks.iter().map(|m| m.get(x, y)).sum::<f64>() + palette.get(x, y);
                assert!((sum - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn higher_mask_backprojects_further() {
        let cam = test_camera();
        let cfg = BackprojectionConfig {
            alpha: 10.0,
            ..Default::default()
        };
        let base = Mask::from_fn(200, 200, |x, y| {
            if (90..110).contains(&x) && (120..140).contains(&y) {
                1.0
            } else {
                0.0
            }
        });
        let shifted = Mask::from_fn(200, 200, |x, y| {
            if (90..110).contains(&x) && (80..100).contains(&y) {
                1.0
            } else {
                0.0
            }
        });
        let tz_base = backproject_manual(&base, &cam, &cfg).unwrap().translation.z;
        let tz_shift = backproject_manual(&shifted, &cam, &cfg)
            .unwrap()
            .translation
            .z;
        assert!(
            tz_shift > tz_base,
            "shifted-up mask must backproject further: {tz_shift} vs {tz_base}"
        );
    }

    #[test]
    fn backproject_empty_mask_errors() {
        let cam = test_camera();
        assert!(backproject_manual(&Mask::zeros(200, 200), &cam, &Default::default()).is_err());
    }

    #[test]
    fn backproject_degenerate_extent_errors() {
        let cam = test_camera();
        let line = Mask::from_fn(200, 200, |x, y| if x == 50 && y > 20 { 1.0 } else { 0.0 });
        assert!(matches!(
            backproject_manual(&line, &cam, &Default::default()),
            Err(Error::DegenerateExtent(_))
        ));
    }

    #[test]
    fn round_trip_recovers_translation_within_ten_percent() {
        // Ground-plane scene: fixed-height objects, depth range calibrated.
        let cam = test_camera();
        let ground = 2.5;
        let make = |z: f64| {
            Cuboid::axis_aligned(
                nalgebra::Vector3::new(0.3, ground - 0.75, z),
                nalgebra::Vector3::new(1.5, 1.5, 1.0),
            )
            .unwrap()
        };
        let depths = [8.0, 9.0, 10.0, 11.0, 12.0];
        let mut samples = Vec::new();
        for &z in &depths {
            let mask = project(&make(z), &cam).unwrap();
            let (_, _, _, y_max) = soft_bounds(&mask, 200).unwrap();
            samples.push((normalized_bottom_bound(y_max, cam.height()), z));
        }
        let alpha = calibrate_alpha(&samples).unwrap();
        let cfg = BackprojectionConfig {
            alpha,
            fixed_z_size: 1.0,
            ..Default::default()
        };
        let truth = make(10.0);
        let mask = project(&truth, &cam).unwrap();
        let recovered = backproject_manual(&mask, &cam, &cfg).unwrap();
        let rel = (recovered.translation - truth.translation).norm() / truth.translation.norm();
        assert!(rel < 0.10, "relative translation error {rel}");
    }
}
