//! Pinhole cameras.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{self, Mat3, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CameraError {
    #[error("invalid intrinsics: {0}")]
    Intrinsics(String),
    #[error("rotation is not orthonormal (deviation {0:e})")]
    NotOrthonormal(f64),
    #[error("near plane must be positive, got {0}")]
    NearPlane(f64),
    #[error("degenerate look-at: eye coincides with target or up is parallel to the view axis")]
    DegenerateLookAt,
}

/// Pinhole intrinsics in pixels. The center of the top-left pixel is (0.5, 0.5).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<(), CameraError> {
        if self.width == 0 || self.height == 0 {
            return Err(CameraError::Intrinsics(format!(
                "image size {}x{} must be at least 1x1",
                self.width, self.height
            )));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.fx.is_finite() || !self.fy.is_finite() {
            return Err(CameraError::Intrinsics(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(CameraError::Intrinsics("principal point is not finite".into()));
        }
        Ok(())
    }

    /// Integer downscale: size truncates, focal lengths and principal point divide.
    pub fn downscaled(&self, factor: u32) -> Self {
        let f = f64::from(factor.max(1));
        Self {
            width: self.width / factor.max(1),
            height: self.height / factor.max(1),
            fx: self.fx / f,
            fy: self.fy / f,
            cx: self.cx / f,
            cy: self.cy / f,
        }
    }

    /// Intrinsics with a given horizontal field of view, principal point centered.
    pub fn from_fov(width: u32, height: u32, fov_x_degrees: f64) -> Self {
        let f = 0.5 * f64::from(width) / (0.5 * fov_x_degrees.to_radians()).tan();
        Self {
            width,
            height,
            fx: f,
            fy: f,
            cx: 0.5 * f64::from(width),
            cy: 0.5 * f64::from(height),
        }
    }
}

pub const DEFAULT_NEAR_PLANE: f64 = 0.01;

/// World-to-camera pose plus intrinsics. Camera space is x right, y down, z forward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub intrinsics: CameraIntrinsics,
    pub rotation: Mat3,
    pub translation: Vec3,
    pub near_plane: f64,
}

impl Camera {
    pub fn new(
        intrinsics: CameraIntrinsics,
        rotation: Mat3,
        translation: Vec3,
    ) -> Result<Self, CameraError> {
        let cam = Self {
            intrinsics,
            rotation,
            translation,
            near_plane: DEFAULT_NEAR_PLANE,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Pose from a world-to-camera quaternion (w, x, y, z) and translation.
    pub fn from_quaternion(
        intrinsics: CameraIntrinsics,
        rotation: [f64; 4],
        translation: Vec3,
    ) -> Result<Self, CameraError> {
        let n = rotation.iter().map(|v| v * v).sum::<f64>().sqrt();
        Self::new(
            intrinsics,
            math::quat_to_mat(rotation.map(|v| v / n)),
            translation,
        )
    }

    /// Camera at `eye` looking at `target`, with `up` as the approximate world up.
    pub fn look_at(
        intrinsics: CameraIntrinsics,
        eye: Vec3,
        target: Vec3,
        up: Vec3,
    ) -> Result<Self, CameraError> {
        let forward = math::sub(target, eye);
        let fl = math::norm(forward);
        if fl < 1e-12 {
            return Err(CameraError::DegenerateLookAt);
        }
        let forward = math::scale(forward, 1.0 / fl);
        // Image y points down, so right = down × forward = forward × up.
        let right = math::cross(forward, up);
        let rl = math::norm(right);
        if rl < 1e-9 {
            return Err(CameraError::DegenerateLookAt);
        }
        let right = math::scale(right, 1.0 / rl);
        let down = math::cross(forward, right);
        let rotation = [right, down, forward];
        let translation = math::scale(math::mat_vec(&rotation, eye), -1.0);
        Self::new(intrinsics, rotation, translation)
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        self.intrinsics.validate()?;
        let rrt = math::mat_mul(&self.rotation, &math::transpose(&self.rotation));
        let mut dev: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                dev = dev.max((rrt[i][j] - want).abs());
            }
        }
        if !(dev <= 1e-6) {
            return Err(CameraError::NotOrthonormal(dev));
        }
        if !(self.near_plane > 0.0) {
            return Err(CameraError::NearPlane(self.near_plane));
        }
        Ok(())
    }

    /// Camera center in world coordinates, `−Rᵀ·t`.
    pub fn center(&self) -> Vec3 {
        math::scale(math::mat_t_vec(&self.rotation, self.translation), -1.0)
    }

    pub fn world_to_camera(&self, p: Vec3) -> Vec3 {
        math::add(math::mat_vec(&self.rotation, p), self.translation)
    }

    pub fn width(&self) -> u32 {
        self.intrinsics.width
    }

    pub fn height(&self) -> u32 {
        self.intrinsics.height
    }
}
