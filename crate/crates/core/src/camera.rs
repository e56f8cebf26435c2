//! Pinhole camera: intrinsics plus a rigid world-to-camera pose.

use std::path::Path;

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ORTHONORMAL_TOL: f64 = 1e-9;

/// Pinhole camera. The pose maps world points into the camera frame
/// (`p_cam = R * p_world + t`); the camera looks down +Z with x right and
/// y down, so pixel coordinates are `u = fx * x / z + cx`,
/// `v = fy * y / z + cy`.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub focal: Vector2<f64>,
    pub principal_point: Vector2<f64>,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    /// (width, height) in pixels.
    pub image_size: (usize, usize),
}

/// On-disk JSON form: `focal`, `principal_point`, `rotation` (row-major
/// 3x3), `translation`, `image_size`.
#[derive(Serialize, Deserialize)]
struct CameraFile {
    focal: [f64; 2],
    principal_point: [f64; 2],
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
    image_size: [usize; 2],
}

impl Camera {
    pub fn new(
        focal: Vector2<f64>,
        principal_point: Vector2<f64>,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        image_size: (usize, usize),
    ) -> Result<Self> {
        if !(focal.x > 0.0 && focal.y > 0.0) {
            return Err(Error::InvalidCamera("focal lengths must be positive"));
        }
        let gram = rotation * rotation.transpose();
        let identity_err = (gram - Matrix3::identity()).abs().max();
        if identity_err > ORTHONORMAL_TOL {
            return Err(Error::InvalidCamera("pose rotation is not orthonormal"));
        }
        if (rotation.determinant() - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(Error::InvalidCamera(
                "pose rotation must have determinant +1",
            ));
        }
        if image_size.0 == 0 || image_size.1 == 0 {
            return Err(Error::InvalidCamera("image size must be positive"));
        }
        Ok(Camera {
            focal,
            principal_point,
            rotation,
            translation,
            image_size,
        })
    }

    /// Identity-pose camera with square focal length, principal point at the
    /// image center.
    pub fn identity_pose(focal: f64, width: usize, height: usize) -> Self {
        Camera {
            focal: Vector2::new(focal, focal),
            principal_point: Vector2::new(width as f64 / 2.0, height as f64 / 2.0),
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            image_size: (width, height),
        }
    }

    pub fn width(&self) -> usize {
        self.image_size.0
    }

    pub fn height(&self) -> usize {
        self.image_size.1
    }

    /// World point into the camera frame.
    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Camera-frame point back to world coordinates.
    pub fn camera_to_world(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p - self.translation)
    }

    /// Projects a camera-frame point with positive depth to pixel
    /// coordinates `(u, v)`.
    pub fn project_camera_point(&self, p: &Vector3<f64>) -> Result<Vector2<f64>> {
        if p.z <= 0.0 {
            return Err(Error::BehindCamera(p.z));
        }
        Ok(Vector2::new(
            self.focal.x * p.x / p.z + self.principal_point.x,
            self.focal.y * p.y / p.z + self.principal_point.y,
        ))
    }

    /// Projects a world point to pixel coordinates.
    pub fn project_point(&self, p: &Vector3<f64>) -> Result<Vector2<f64>> {
        self.project_camera_point(&self.world_to_camera(p))
    }

    /// Back-casts pixel `(u, v)` to the camera-frame point at depth `z`.
    pub fn backcast(&self, u: f64, v: f64, z: f64) -> Vector3<f64> {
        Vector3::new(
            (u - self.principal_point.x) * z / self.focal.x,
            (v - self.principal_point.y) * z / self.focal.y,
            z,
        )
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let file = CameraFile {
            focal: [self.focal.x, self.focal.y],
            principal_point: [self.principal_point.x, self.principal_point.y],
            rotation: [
                [
                    self.rotation[(0, 0)],
                    self.rotation[(0, 1)],
                    self.rotation[(0, 2)],
                ],
                [
                    self.rotation[(1, 0)],
                    self.rotation[(1, 1)],
                    self.rotation[(1, 2)],
                ],
                [
                    self.rotation[(2, 0)],
                    self.rotation[(2, 1)],
                    self.rotation[(2, 2)],
                ],
            ],
            translation: [self.translation.x, self.translation.y, self.translation.z],
            image_size: [self.image_size.0, self.image_size.1],
        };
        let text = serde_json::to_string_pretty(&file).expect("camera serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Camera> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: CameraFile =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        let r = file.rotation;
        Camera::new(
            Vector2::new(file.focal[0], file.focal[1]),
            Vector2::new(file.principal_point[0], file.principal_point[1]),
            Matrix3::new(
                r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
            ),
            Vector3::new(
                file.translation[0],
                file.translation[1],
                file.translation[2],
            ),
            (file.image_size[0], file.image_size[1]),
        )
    }
}
