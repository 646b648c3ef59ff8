use nalgebra::{Matrix3, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::compose::RigidTransform;
use crate::error::{Error, Result};

/// Pinhole intrinsics. Pixel centres sit at integer coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn check(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.width > 0
            && self.height > 0
            && (0.0..self.width as f64).contains(&self.cx)
            && (0.0..self.height as f64).contains(&self.cy);
        if ok {
            Ok(())
        } else {
            Err(Error::Precondition(format!("invalid intrinsics {self:?}")))
        }
    }

    /// Row-major `K`.
    pub fn k_matrix(&self) -> [f64; 9] {
        [self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0]
    }
}

/// A camera: intrinsics plus the world-to-camera rigid motion (OpenCV axes:
/// x right, y down, z forward).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraView {
    pub intrinsics: Intrinsics,
    pub world_to_camera: RigidTransform,
}

impl CameraView {
    pub fn new(intrinsics: Intrinsics, world_to_camera: RigidTransform) -> Self {
        CameraView {
            intrinsics,
            world_to_camera,
        }
    }

    /// Camera at `eye` looking at `target`, with image "up" as close to
    /// `up` as possible.
    pub fn look_at(intrinsics: Intrinsics, eye: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>) -> Self {
        CameraView::new(intrinsics, look_at_pose(eye, target, up))
    }

    pub fn width(&self) -> usize {
        self.intrinsics.width as usize
    }

    pub fn height(&self) -> usize {
        self.intrinsics.height as usize
    }

    pub fn check(&self) -> Result<()> {
        self.intrinsics.check()
    }

    /// Camera centre in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        self.world_to_camera.inverse().translation
    }

    pub fn to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.world_to_camera.apply(p)
    }

    /// Pixel coordinates of a camera-space point (no near-plane check).
    pub fn project_camera_point(&self, p: &Vector3<f64>) -> Vector2<f64> {
        let k = &self.intrinsics;
        Vector2::new(k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy)
    }
}

/// World-to-camera transform of a camera at `eye` looking at `target`.
pub fn look_at_pose(eye: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>) -> RigidTransform {
    let forward = (target - eye).normalize();
    let mut right = forward.cross(&up);
    if right.norm() < 1e-9 {
        right = forward.cross(&Vector3::y());
        if right.norm() < 1e-9 {
            right = forward.cross(&Vector3::x());
        }
    }
    let right = right.normalize();
    let down = forward.cross(&right);
    let cam_to_world = Matrix3::from_columns(&[right, down, forward]);
    let rotation = UnitQuaternion::from_matrix(&cam_to_world.transpose());
    RigidTransform::new(rotation, -(rotation * eye))
}
