//! The 3D primitive: an oriented box given by translation, size and Euler
//! rotation.

use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Oriented cuboid. `size` holds full edge lengths; `rotation` holds Euler
/// angles in radians, extrinsic XYZ order (rotate about world X, then Y,
/// then Z). Every module in this crate shares that convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cuboid {
    #[serde(rename = "t")]
    pub translation: Vector3<f64>,
    #[serde(rename = "s")]
    pub size: Vector3<f64>,
    #[serde(rename = "q")]
    pub rotation: Vector3<f64>,
}

impl Cuboid {
    pub fn new(
        translation: Vector3<f64>,
        size: Vector3<f64>,
        rotation: Vector3<f64>,
    ) -> Result<Self> {
        if !(size.x > 0.0 && size.y > 0.0 && size.z > 0.0) {
            return Err(Error::InvalidCuboid("all size components must be positive"));
        }
        if !rotation.iter().all(|a| a.is_finite()) || !translation.iter().all(|a| a.is_finite()) {
            return Err(Error::InvalidCuboid(
                "translation and rotation must be finite",
            ));
        }
        Ok(Cuboid {
            translation,
            size,
            rotation,
        })
    }

    pub fn axis_aligned(translation: Vector3<f64>, size: Vector3<f64>) -> Result<Self> {
        Cuboid::new(translation, size, Vector3::zeros())
    }

    /// Rotation matrix for the extrinsic XYZ Euler angles.
    pub fn rotation_matrix(&self) -> Rotation3<f64> {
        // nalgebra's from_euler_angles(r, p, y) composes Rz * Ry * Rx, which
        // is exactly extrinsic XYZ.
        Rotation3::from_euler_angles(self.rotation.x, self.rotation.y, self.rotation.z)
    }

    /// The eight corners in world coordinates.
    pub fn corners(&self) -> [Vector3<f64>; 8] {
        let rot = self.rotation_matrix();
        let h = self.size / 2.0;
        let mut out = [Vector3::zeros(); 8];
        let mut i = 0;
        for &sx in &[-1.0, 1.0] {
            for &sy in &[-1.0, 1.0] {
                for &sz in &[-1.0, 1.0] {
                    out[i] = self.translation + rot * Vector3::new(sx * h.x, sy * h.y, sz * h.z);
                    i += 1;
                }
            }
        }
        out
    }

    pub fn volume(&self) -> f64 {
        self.size.x * self.size.y * self.size.z
    }

    /// World-frame axis-aligned bounding box, as (min, max) corners.
    pub fn aabb(&self) -> (Vector3<f64>, Vector3<f64>) {
        let corners = self.corners();
        let mut lo = corners[0];
        let mut hi = corners[0];
        for c in &corners[1..] {
            lo = lo.inf(c);
            hi = hi.sup(c);
        }
        (lo, hi)
    }

    /// Whether a world-space point lies inside the (closed) cuboid.
    pub fn contains(&self, point: &Vector3<f64>) -> bool {
        let local = self.rotation_matrix().inverse() * (point - self.translation);
        let h = self.size / 2.0;
        local.x.abs() <= h.x && local.y.abs() <= h.y && local.z.abs() <= h.z
    }
}

/// AABB overlap test between two cuboids (conservative for rotated boxes).
pub fn aabbs_intersect(a: &Cuboid, b: &Cuboid) -> bool {
    let (alo, ahi) = a.aabb();
    let (blo, bhi) = b.aabb();
    alo.x <= bhi.x
        && blo.x <= ahi.x
        && alo.y <= bhi.y
        && blo.y <= ahi.y
        && alo.z <= bhi.z
        && blo.z <= ahi.z
}
