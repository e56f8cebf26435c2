//! Deterministic synthetic-scene generator: cuboid objects moving over a
//! uniform background, static rectangular occluders, ground-truth tracks
//! rendered with the same depth-ordered palette the rest of the crate
//! uses, and optional physical-violation injection (disappear/teleport).
//!
//! Everything is a pure function of the configuration. Sampling uses
//! ChaCha8 seeded from the config seed; rendering is deterministic, so
//! re-rendering any frame reproduces it bit for bit. Objects rest on a
//! ground plane (the camera looks down +Z with y pointing down), which is
//! also what makes the bottom-bound depth heuristic in the geometry
//! module calibratable.
//!
//! Objects are painted in a flat per-object color modulated by a smooth
//! seeded lighting field (two low-frequency cosine waves across the
//! image). The field is what keeps color clustering from being a
//! trivially exact partition: a wide object spans a noticeable luminance
//! range and quantizes into bands whose cut levels depend on the local
//! pixel population, which is the regime the multi-scale merge is
//! designed to repair. The background stays exactly uniform.

use nalgebra::Vector3;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::camera::Camera;
use crate::cuboid::{aabbs_intersect, Cuboid};
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::geometry::render_with_palette;
use crate::mask::Mask;
use crate::track::{load_tracks, save_tracks, ObjectTrack};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MotionKind {
    /// Constant velocity.
    Straight,
    /// Constant speed with the velocity sign flipped every `period` frames.
    BackAndForth { period: usize },
    /// Stationary translation, constant angular velocity about the
    /// vertical axis.
    Rotate,
    /// Constant velocity until `frame`, then stationary. Used by the
    /// wall-and-mover plausibility scenes.
    StopAtFrame { frame: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    Disappear,
    Teleport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViolationSpec {
    pub kind: ViolationKind,
    pub frame: usize,
    pub object_index: usize,
    /// Translation jump for teleport violations; ignored for disappear.
    pub offset: [f64; 3],
}

/// Per-object configuration. Unpinned fields are sampled from the scene
/// ranges, which is how the scenario builders nail down geometry while
/// plain datasets stay random.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub motion: Option<MotionKind>,
    pub size: Option<[f64; 3]>,
    pub start: Option<[f64; 3]>,
    pub velocity: Option<[f64; 3]>,
    pub angular_velocity: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct OccluderSpec {
    pub center: Option<[f64; 3]>,
    pub size: Option<[f64; 3]>,
}

#[derive(Debug, Clone)]
pub struct SceneConfig {
    pub seed: u64,
    pub objects: Vec<ObjectSpec>,
    pub occluders: Vec<OccluderSpec>,
    pub frames: usize,
    pub camera: Camera,
    pub violation: Option<ViolationSpec>,
    /// Amplitude of the lighting field modulating object colors.
    pub lighting: f64,
    pub background: [f64; 3],
    /// Ground plane height (y points down; objects rest their bottom face
    /// here).
    pub ground_y: f64,
    pub depth_range: (f64, f64),
    pub size_range: (f64, f64),
    pub speed_range: (f64, f64),
}

impl SceneConfig {
    pub fn new(seed: u64, n_objects: usize, frames: usize, camera: Camera) -> Self {
        SceneConfig {
            seed,
            objects: vec![ObjectSpec::default(); n_objects],
            occluders: Vec::new(),
            frames,
            camera,
            violation: None,
            lighting: 0.11,
            background: [0.92, 0.92, 0.92],
            ground_y: 1.8,
            depth_range: (8.0, 13.0),
            size_range: (1.1, 2.0),
            speed_range: (0.08, 0.18),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames < 2 {
            return Err(Error::InvalidConfig("need at least 2 frames".into()));
        }
        if self.objects.is_empty() {
            return Err(Error::InvalidConfig("need at least 1 object".into()));
        }
        if let Some(v) = &self.violation {
            if v.frame >= self.frames {
                return Err(Error::InvalidConfig("violation frame out of range".into()));
            }
            if v.object_index >= self.objects.len() {
                return Err(Error::InvalidConfig("violation object out of range".into()));
            }
        }
        Ok(())
    }
}

/// A generated scene: frames, ground-truth tracks (masks rendered with
/// occlusion), per-frame occluder masks, and enough of the rendering model
/// (colors, speckle, camera) to re-render frames after a violation edit.
#[derive(Debug, Clone)]
pub struct SceneRecord {
    pub camera: Camera,
    pub frames: Vec<Frame>,
    pub gt_tracks: Vec<ObjectTrack>,
    pub occluder_cuboids: Vec<Cuboid>,
    /// `occluder_masks[frame][occluder]`.
    pub occluder_masks: Vec<Vec<Mask>>,
    pub violation_frame: Option<usize>,
    pub violation: Option<ViolationSpec>,
    pub object_colors: Vec<[f64; 3]>,
    pub occluder_colors: Vec<[f64; 3]>,
    pub background: [f64; 3],
    pub lighting: f64,
    pub seed: u64,
}

const PLACEMENT_ATTEMPTS: usize = 1000;
const FRUSTUM_MARGIN_PX: f64 = 2.0;

/// Saturated, well-separated entity colors from golden-ratio hue stepping.
pub fn entity_color(index: usize) -> [f64; 3] {
    let hue = (0.13 + index as f64 * 0.618_033_988_749_895).fract();
    hsv_to_rgb(hue, 0.82, 0.85)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let i = (h * 6.0).floor();
    let f = h * 6.0 - i;
    let p = v * (1.0 - s);
    let q = v * (1.0 - f * s);
    let t = v * (1.0 - (1.0 - f) * s);
    match (i as i64).rem_euclid(6) {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

fn splitmix(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58476D1CE4E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

fn hash01(seed: u64, salt: u64) -> f64 {
    (splitmix(seed ^ salt.wrapping_mul(0x9E3779B97F4A7C15)) >> 11) as f64 / (1u64 << 53) as f64
}

/// Static smooth lighting field in [-1, 1]: two seeded low-frequency
/// cosine waves across the image.
fn lighting_field(seed: u64, x: usize, y: usize, width: usize, height: usize) -> f64 {
    let tau = std::f64::consts::TAU;
    let (w, h) = (width as f64, height as f64);
    let (fx, fy) = (x as f64 / w, y as f64 / h);
    let a1 = hash01(seed, 1) * tau;
    let p1 = hash01(seed, 2) * tau;
    let a2 = hash01(seed, 3) * tau;
    let p2 = hash01(seed, 4) * tau;
    let wave1 = (tau * 1.1 * (fx * a1.cos() + fy * a1.sin()) + p1).cos();
    let wave2 = (tau * 1.9 * (fx * a2.cos() + fy * a2.sin()) + p2).cos();
    (wave1 + wave2) / 2.0
}

/// Internal motion model for one sampled object.
#[derive(Debug, Clone)]
struct Trajectory {
    size: Vector3<f64>,
    start: Vector3<f64>,
    velocity: Vector3<f64>,
    angular_velocity: f64,
    motion: MotionKind,
}

impl Trajectory {
    fn cuboid_at(&self, frame: usize) -> Cuboid {
        let (translation, rotation) = match self.motion {
            MotionKind::Straight => (self.start + self.velocity * frame as f64, Vector3::zeros()),
            MotionKind::StopAtFrame { frame: stop } => {
                let steps = frame.min(stop) as f64;
                (self.start + self.velocity * steps, Vector3::zeros())
            }
            MotionKind::Rotate => (
                self.start,
                Vector3::new(0.0, self.angular_velocity * frame as f64, 0.0),
            ),
            MotionKind::BackAndForth { period } => {
                let period = period.max(1);
                let mut displacement = Vector3::zeros();
                for step in 0..frame {
                    let sign = if (step / period) % 2 == 0 { 1.0 } else { -1.0 };
                    displacement += self.velocity * sign;
                }
                (self.start + displacement, Vector3::zeros())
            }
        };
        Cuboid::new(translation, self.size, rotation)
            .expect("sampled trajectories keep positive sizes")
    }
}

/// All eight corner projections inside the image with a margin, all
/// corners in front of the camera.
fn inside_frustum(cuboid: &Cuboid, cam: &Camera) -> bool {
    for corner in cuboid.corners() {
        let p = cam.world_to_camera(&corner);
        if p.z <= 0.5 {
            return false;
        }
        let px = match cam.project_camera_point(&p) {
            Ok(px) => px,
            Err(_) => return false,
        };
        if px.x < FRUSTUM_MARGIN_PX
            || px.y < FRUSTUM_MARGIN_PX
            || px.x > cam.width() as f64 - FRUSTUM_MARGIN_PX
            || px.y > cam.height() as f64 - FRUSTUM_MARGIN_PX
        {
            return false;
        }
    }
    true
}

/// Deterministic scene generation. Objects are sampled one at a time and
/// resampled until their whole trajectory stays inside the camera frustum
/// and never intersects (3D AABB test, per frame) a previously placed
/// object or occluder.
pub fn generate(cfg: &SceneConfig) -> Result<SceneRecord> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let cam = &cfg.camera;

    // Occluders first: static, thin, nearer to the camera than the object
    // depth range so they can actually hide things.
    let mut occluder_cuboids: Vec<Cuboid> = Vec::with_capacity(cfg.occluders.len());
    for spec in &cfg.occluders {
        let mut placed = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let size: Vector3<f64> = match spec.size {
                Some(s) => s.into(),
                None => Vector3::new(rng.random_range(1.2..2.4), rng.random_range(2.0..3.0), 0.25),
            };
            let center: Vector3<f64> = match spec.center {
                Some(c) => c.into(),
                None => {
                    let z = rng.random_range(5.5..7.0);
                    let x_span = 0.30 * z;
                    Vector3::new(
                        rng.random_range(-x_span..x_span),
                        cfg.ground_y - size.y / 2.0,
                        z,
                    )
                }
            };
            let cuboid = Cuboid::axis_aligned(center, size)?;
            let clear = occluder_cuboids
                .iter()
                .all(|other| !aabbs_intersect(&cuboid, other));
            if inside_frustum(&cuboid, cam) && clear {
                placed = Some(cuboid);
                break;
            }
            if spec.center.is_some() && spec.size.is_some() {
                break; // fully pinned, nothing to resample
            }
        }
        match placed {
            Some(c) => occluder_cuboids.push(c),
            None => {
                return Err(Error::GenerationError(
                    "could not place occluder inside the frustum".into(),
                ))
            }
        }
    }

    // Objects, with rejection sampling against everything placed so far.
    let motions = [
        MotionKind::Straight,
        MotionKind::BackAndForth { period: 0 },
        MotionKind::Rotate,
    ];
    let mut trajectories: Vec<Trajectory> = Vec::with_capacity(cfg.objects.len());
    for (index, spec) in cfg.objects.iter().enumerate() {
        let motion_template = spec.motion.unwrap_or(motions[index % motions.len()]);
        let mut accepted = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let size: Vector3<f64> = match spec.size {
                Some(s) => s.into(),
                None => {
                    let (lo, hi) = cfg.size_range;
                    Vector3::new(
                        rng.random_range(lo..hi),
                        rng.random_range(lo..hi),
                        rng.random_range(lo..hi),
                    )
                }
            };
            let start: Vector3<f64> = match spec.start {
                Some(s) => s.into(),
                None => {
                    let (zlo, zhi) = cfg.depth_range;
                    let z = rng.random_range(zlo..zhi);
                    let x_span = 0.28 * z;
                    Vector3::new(
                        rng.random_range(-x_span..x_span),
                        cfg.ground_y - size.y / 2.0,
                        z,
                    )
                }
            };
            let motion = match motion_template {
                MotionKind::BackAndForth { period: 0 } => MotionKind::BackAndForth {
                    period: (cfg.frames / 4).max(2),
                },
                other => other,
            };
            let velocity: Vector3<f64> = match spec.velocity {
                Some(v) => v.into(),
                None => match motion {
                    MotionKind::Rotate => Vector3::zeros(),
                    _ => {
                        let (slo, shi) = cfg.speed_range;
                        let speed = rng.random_range(slo..shi);
                        let angle = rng.random_range(0.0..std::f64::consts::TAU);
                        // Move in the ground plane (x and depth only).
                        Vector3::new(speed * angle.cos(), 0.0, speed * angle.sin() * 0.4)
                    }
                },
            };
            let angular_velocity = spec
                .angular_velocity
                .unwrap_or_else(|| rng.random_range(0.04..0.12));
            let candidate = Trajectory {
                size,
                start,
                velocity,
                angular_velocity,
                motion,
            };
            let ok = (0..cfg.frames).all(|f| {
                let c = candidate.cuboid_at(f);
                inside_frustum(&c, cam)
                    && occluder_cuboids.iter().all(|o| !aabbs_intersect(&c, o))
                    && trajectories.iter().all(|t| {
                        let other = t.cuboid_at(f);
                        !aabbs_intersect(&c, &other)
                    })
            });
            if ok {
                accepted = Some(candidate);
                break;
            }
            let fully_pinned = spec.size.is_some()
                && spec.start.is_some()
                && (spec.velocity.is_some() || matches!(motion, MotionKind::Rotate));
            if fully_pinned {
                break;
            }
        }
        match accepted {
            Some(t) => trajectories.push(t),
            None => {
                return Err(Error::GenerationError(format!(
                    "could not place object {index} after {PLACEMENT_ATTEMPTS} attempts"
                )))
            }
        }
    }

    let object_colors: Vec<[f64; 3]> = (0..cfg.objects.len()).map(entity_color).collect();
    let occluder_colors: Vec<[f64; 3]> = (0..cfg.occluders.len())
        .map(|i| entity_color(cfg.objects.len() + i))
        .collect();

    let mut record = SceneRecord {
        camera: cam.clone(),
        frames: Vec::with_capacity(cfg.frames),
        gt_tracks: trajectories
            .iter()
            .enumerate()
            .map(|(i, _)| ObjectTrack::new(format!("obj{i}")))
            .collect(),
        occluder_cuboids,
        occluder_masks: Vec::with_capacity(cfg.frames),
        violation_frame: None,
        violation: None,
        object_colors,
        occluder_colors,
        background: cfg.background,
        lighting: cfg.lighting,
        seed: cfg.seed,
    };

    for f in 0..cfg.frames {
        let cuboids: Vec<Option<Cuboid>> =
            trajectories.iter().map(|t| Some(t.cuboid_at(f))).collect();
        render_frame_into(&mut record, f, &cuboids)?;
    }

    if let Some(violation) = cfg.violation.clone() {
        record = inject_violation(
            &record,
            violation.kind,
            violation.frame,
            violation.object_index,
            violation.offset.into(),
        )?;
    }
    Ok(record)
}

/// Renders frame `f` from the given per-object cuboids (`None` = absent)
/// and appends image, track states and occluder masks to the record.
fn render_frame_into(
    record: &mut SceneRecord,
    f: usize,
    object_cuboids: &[Option<Cuboid>],
) -> Result<()> {
    let cam = record.camera.clone();
    let mut entities: Vec<(usize, Cuboid, [f64; 3])> = Vec::new();
    for (i, c) in object_cuboids.iter().enumerate() {
        if let Some(c) = c {
            entities.push((i, *c, record.object_colors[i]));
        }
    }
    let n_objects = object_cuboids.len();
    for (j, c) in record.occluder_cuboids.iter().enumerate() {
        entities.push((n_objects + j, *c, record.occluder_colors[j]));
    }

    let cuboids: Vec<Cuboid> = entities.iter().map(|e| e.1).collect();
    let (masks, _palette) = render_with_palette(&cuboids, &cam)?;

    let (w, h) = (cam.width(), cam.height());
    let mut image = Frame::filled(f, w, h, record.background);
    for ((_entity, _, color), mask) in entities.iter().zip(&masks) {
        for y in 0..h {
            for x in 0..w {
                if mask.get(x, y) > 0.5 {
                    let n = lighting_field(record.seed, x, y, w, h) * record.lighting;
                    image.set(
                        x,
                        y,
                        [
                            (color[0] + n).clamp(0.0, 1.0),
                            (color[1] + n).clamp(0.0, 1.0),
                            (color[2] + n).clamp(0.0, 1.0),
                        ],
                    );
                }
            }
        }
    }
    record.frames.push(image);

    let mut mask_iter = masks.into_iter();
    for (i, c) in object_cuboids.iter().enumerate() {
        if let Some(c) = c {
            let mask = mask_iter.next().expect("one mask per entity");
            record.gt_tracks[i].push_state(f, *c, mask)?;
        }
    }
    record.occluder_masks.push(mask_iter.collect::<Vec<Mask>>());
    Ok(())
}

/// Applies a violation to an already generated scene, re-rendering every
/// frame from the violation on. Frames before it are untouched, which is
/// what makes plausible/implausible pairs share an identical prefix.
pub fn inject_violation(
    record: &SceneRecord,
    kind: ViolationKind,
    frame: usize,
    object_index: usize,
    offset: Vector3<f64>,
) -> Result<SceneRecord> {
    if frame >= record.frames.len() {
        return Err(Error::InvalidConfig(format!(
            "violation frame {frame} out of range"
        )));
    }
    if object_index >= record.gt_tracks.len() {
        return Err(Error::InvalidConfig(format!(
            "violation object {object_index} out of range"
        )));
    }
    if record.gt_tracks[object_index].state_at(frame).is_none() {
        return Err(Error::InvalidConfig(format!(
            "object {object_index} is absent at frame {frame}"
        )));
    }

    // Edited per-frame cuboids for every object.
    let n_frames = record.frames.len();
    let mut cuboids: Vec<Vec<Option<Cuboid>>> = (0..n_frames)
        .map(|f| {
            record
                .gt_tracks
                .iter()
                .map(|t| t.state_at(f).map(|s| s.cuboid))
                .collect()
        })
        .collect();
    for frame_cuboids in cuboids.iter_mut().skip(frame) {
        match kind {
            ViolationKind::Disappear => {
                frame_cuboids[object_index] = None;
            }
            ViolationKind::Teleport => {
                if let Some(c) = frame_cuboids[object_index].as_mut() {
                    c.translation += offset;
                }
            }
        }
    }

    let mut edited = SceneRecord {
        camera: record.camera.clone(),
        frames: record.frames[..frame].to_vec(),
        gt_tracks: record
            .gt_tracks
            .iter()
            .map(|t| {
                let mut cut = t.clone();
                cut.truncate_from(frame);
                cut
            })
            .collect(),
        occluder_cuboids: record.occluder_cuboids.clone(),
        occluder_masks: record.occluder_masks[..frame].to_vec(),
        violation_frame: Some(frame),
        violation: Some(ViolationSpec {
            kind,
            frame,
            object_index,
            offset: offset.into(),
        }),
        object_colors: record.object_colors.clone(),
        occluder_colors: record.occluder_colors.clone(),
        background: record.background,
        lighting: record.lighting,
        seed: record.seed,
    };
    for (f, frame_cuboids) in cuboids.iter().enumerate().take(n_frames).skip(frame) {
        render_frame_into(&mut edited, f, frame_cuboids)?;
    }
    Ok(edited)
}

// ---------------------------------------------------------------------------
// Scenario builders for the evaluation scenes.
// ---------------------------------------------------------------------------

/// Generic scene: objects fully sampled, motions cycled through the three
/// kinds.
pub fn random_config(
    seed: u64,
    n_objects: usize,
    n_occluders: usize,
    frames: usize,
    camera: Camera,
) -> SceneConfig {
    let mut cfg = SceneConfig::new(seed, n_objects, frames, camera);
    cfg.occluders = vec![OccluderSpec::default(); n_occluders];
    cfg
}

/// One object wider than a 2x2-cell patch plus one small object, far
/// apart and drifting away from each other. Exercises the multi-scale
/// versus single-scale contrast.
pub fn large_small_config(seed: u64, frames: usize, camera: Camera) -> SceneConfig {
    let mut cfg = SceneConfig::new(seed, 2, frames, camera);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1a26e);
    let jitter = rng.random_range(-0.3..0.3);
    // At depth 8.5 with focal = image width, a 3.4-unit edge spans about
    // 0.4 of the image width: comfortably larger than one 2x2-cell patch.
    cfg.objects[0] = ObjectSpec {
        motion: Some(MotionKind::Straight),
        size: Some([3.4, 2.8, 1.2]),
        start: Some([-1.1 + jitter, cfg.ground_y - 1.4, 8.5]),
        velocity: Some([-0.035, 0.0, 0.0]),
        angular_velocity: Some(0.0),
    };
    cfg.objects[1] = ObjectSpec {
        motion: Some(MotionKind::Straight),
        size: Some([1.1, 1.1, 1.1]),
        start: Some([2.6 + jitter, cfg.ground_y - 0.55, 10.5]),
        velocity: Some([0.045, 0.0, 0.0]),
        angular_velocity: Some(0.0),
    };
    cfg
}

/// Two objects at different depths whose projections cross mid-scene: the
/// near, wider one fully covers the far one for a few frames, so a tracker
/// that cannot see through the occlusion loses the far object's identity.
pub fn occlusion_crossing_config(seed: u64, frames: usize, camera: Camera) -> SceneConfig {
    let mut cfg = SceneConfig::new(seed, 2, frames, camera);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0cc1);
    let jitter = rng.random_range(-0.1..0.1);
    let half = frames as f64 / 2.0;
    // Both projections sit at image center at mid-video; start positions
    // are solved from the velocities.
    let near_v = 0.18;
    let far_v = -0.36;
    cfg.objects[0] = ObjectSpec {
        motion: Some(MotionKind::Straight),
        size: Some([2.4, 2.4, 1.0]),
        start: Some([-near_v * half + jitter, cfg.ground_y - 1.2, 7.5]),
        velocity: Some([near_v, 0.0, 0.0]),
        angular_velocity: Some(0.0),
    };
    cfg.objects[1] = ObjectSpec {
        motion: Some(MotionKind::Straight),
        size: Some([1.5, 1.5, 1.0]),
        start: Some([-far_v * half - jitter, cfg.ground_y - 0.75, 11.5]),
        velocity: Some([far_v, 0.0, 0.0]),
        angular_velocity: Some(0.0),
    };
    cfg
}

/// Wall-and-mover scene: a thin static wall, and an object that slides
/// toward it and stops just short at the violation frame. The teleport
/// twin makes the object appear on the far side instead.
pub fn block_task_config(seed: u64, frames: usize, camera: Camera) -> (SceneConfig, ViolationSpec) {
    let mut cfg = SceneConfig::new(seed, 1, frames, camera);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb10c);
    let jitter = rng.random_range(-0.1..0.1);
    let stop_frame = frames / 2;
    let wall_z = 9.0;
    cfg.occluders = vec![OccluderSpec {
        center: Some([0.0, cfg.ground_y - 1.4, wall_z]),
        size: Some([0.35, 2.8, 2.4]),
    }];
    let speed = 0.17;
    let object_size = 1.3;
    // Right face stops a safe margin short of the wall's left face.
    let x_stop = -0.175 - object_size / 2.0 - 0.15;
    cfg.objects[0] = ObjectSpec {
        motion: Some(MotionKind::StopAtFrame { frame: stop_frame }),
        size: Some([object_size, object_size, object_size]),
        start: Some([
            x_stop - speed * stop_frame as f64 + jitter,
            cfg.ground_y - object_size / 2.0,
            wall_z,
        ]),
        velocity: Some([speed, 0.0, 0.0]),
        angular_velocity: Some(0.0),
    };
    let violation = ViolationSpec {
        kind: ViolationKind::Teleport,
        frame: stop_frame,
        object_index: 0,
        // Land mirrored on the far side of the wall.
        offset: [2.0 * (-x_stop - jitter).abs() + 0.3, 0.0, 0.0],
    };
    (cfg, violation)
}

/// Open-field scene for disappearance pairs: one straight mover, nothing
/// to hide behind.
pub fn disappear_config(seed: u64, frames: usize, camera: Camera) -> (SceneConfig, ViolationSpec) {
    let mut cfg = SceneConfig::new(seed, 1, frames, camera);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xd15a);
    let jitter = rng.random_range(-0.2..0.2);
    let speed = 0.14;
    let half = frames as f64 / 2.0;
    cfg.objects[0] = ObjectSpec {
        motion: Some(MotionKind::Straight),
        size: Some([1.4, 1.4, 1.4]),
        start: Some([-speed * half + jitter, cfg.ground_y - 0.7, 9.5]),
        velocity: Some([speed, 0.0, 0.0]),
        angular_velocity: Some(0.0),
    };
    let violation = ViolationSpec {
        kind: ViolationKind::Disappear,
        frame: frames / 2,
        object_index: 0,
        offset: [0.0, 0.0, 0.0],
    };
    (cfg, violation)
}

/// Generates a plausible/implausible pair sharing every frame before the
/// violation.
pub fn generate_pair(
    cfg: &SceneConfig,
    violation: &ViolationSpec,
) -> Result<(SceneRecord, SceneRecord)> {
    let mut base_cfg = cfg.clone();
    base_cfg.violation = None;
    let plausible = generate(&base_cfg)?;
    let implausible = inject_violation(
        &plausible,
        violation.kind,
        violation.frame,
        violation.object_index,
        violation.offset.into(),
    )?;
    Ok((plausible, implausible))
}

// ---------------------------------------------------------------------------
// Dataset directory layout.
// ---------------------------------------------------------------------------

/// Sidecar metadata written with every scene.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneMeta {
    pub seed: u64,
    pub frames: usize,
    pub image_size: [usize; 2],
    pub violation_frame: Option<usize>,
    pub violation: Option<ViolationSpec>,
    pub background: [f64; 3],
    pub lighting: f64,
    pub occluders: Vec<Cuboid>,
    pub object_colors: Vec<[f64; 3]>,
    pub occluder_colors: Vec<[f64; 3]>,
}

/// Writes `frame_<n>.png`, `camera.json`, `gt.jsonl` (+ `masks/`), and
/// `meta.json` into `dir`.
pub fn save_scene(record: &SceneRecord, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (f, frame) in record.frames.iter().enumerate() {
        frame.save_png(&dir.join(format!("frame_{f:04}.png")))?;
    }
    record.camera.save_json(&dir.join("camera.json"))?;
    save_tracks(&record.gt_tracks, &dir.join("gt.jsonl"), &dir.join("masks"))?;
    let meta = SceneMeta {
        seed: record.seed,
        frames: record.frames.len(),
        image_size: [record.camera.width(), record.camera.height()],
        violation_frame: record.violation_frame,
        violation: record.violation.clone(),
        background: record.background,
        lighting: record.lighting,
        occluders: record.occluder_cuboids.clone(),
        object_colors: record.object_colors.clone(),
        occluder_colors: record.occluder_colors.clone(),
    };
    let meta_path = dir.join("meta.json");
    let text = serde_json::to_string_pretty(&meta).expect("meta serializes");
    std::fs::write(&meta_path, text).map_err(|e| Error::io(&meta_path, e))
}

pub fn load_meta(dir: &Path) -> Result<SceneMeta> {
    let path = dir.join("meta.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))
}

/// Reads a scene directory back. Frames go through PNG quantization, so
/// pixel values are 8-bit accurate rather than bit-identical to the
/// in-memory originals.
pub fn load_scene(dir: &Path) -> Result<SceneRecord> {
    let meta = load_meta(dir)?;
    let camera = Camera::load_json(&dir.join("camera.json"))?;
    let mut frames = Vec::with_capacity(meta.frames);
    for f in 0..meta.frames {
        frames.push(Frame::load_png(f, &dir.join(format!("frame_{f:04}.png")))?);
    }
    let gt_tracks = load_tracks(&dir.join("gt.jsonl"))?;
    let mut record = SceneRecord {
        camera,
        frames,
        gt_tracks,
        occluder_cuboids: meta.occluders.clone(),
        occluder_masks: vec![Vec::new(); meta.frames],
        violation_frame: meta.violation_frame,
        violation: meta.violation.clone(),
        object_colors: meta.object_colors.clone(),
        occluder_colors: meta.occluder_colors.clone(),
        background: meta.background,
        lighting: meta.lighting,
        seed: meta.seed,
    };
    if !record.occluder_cuboids.is_empty() {
        // Occluder masks are a pure function of the stored geometry;
        // re-derive them against the objects present per frame.
        for f in 0..meta.frames {
            let mut cuboids: Vec<Cuboid> = record
                .gt_tracks
                .iter()
                .filter_map(|t| t.state_at(f).map(|s| s.cuboid))
                .collect();
            let n_objects = cuboids.len();
            cuboids.extend_from_slice(&record.occluder_cuboids);
            let masks = render_with_palette(&cuboids, &record.camera)?.0;
            record.occluder_masks[f] = masks[n_objects..].to_vec();
        }
    }
    Ok(record)
}
