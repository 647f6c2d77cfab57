use std::f64::consts::TAU;

use serde::Deserialize;
use splatcap_core::camera::{Camera, CameraError, CameraIntrinsics};
use splatcap_core::gaussian::SplatCloud;
use splatcap_core::math::Vec3;
use thiserror::Error;

const WORLD_UP: Vec3 = [0.0, 1.0, 0.0];

#[derive(Debug, Error, PartialEq)]
pub enum PathError {
    #[error("camera path needs at least one frame")]
    NoFrames,
    #[error("orbit radius must be positive, got {0}")]
    Radius(f64),
    #[error("keyframe {index}: {source}")]
    Keyframe { index: usize, source: CameraError },
    #[error("orbit frame {index}: {source}")]
    Orbit { index: usize, source: CameraError },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Orbit {
    pub center: Vec3,
    pub radius: f64,
    /// Eye height above `center`.
    pub height: f64,
    pub frames: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Keyframe {
    pub eye: Vec3,
    pub target: Vec3,
    #[serde(default)]
    pub up: Option<Vec3>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CameraPath {
    Orbit(Orbit),
    Keyframes(Vec<Keyframe>),
}

impl Orbit {
    /// Orbit around the centers' bounding box, far enough that the bounding
    /// sphere fits the narrower field of view.
    pub fn framing(cloud: &SplatCloud, intrinsics: &CameraIntrinsics, frames: usize) -> Orbit {
        let (center, half_diag) = match cloud.bounds() {
            Some((lo, hi)) => {
                let center = [0, 1, 2].map(|i| 0.5 * (lo[i] + hi[i]));
                let d = (0..3).map(|i| (hi[i] - lo[i]).powi(2)).sum::<f64>().sqrt();
                (center, 0.5 * d)
            }
            None => ([0.0; 3], 0.0),
        };
        let half_fov_x = (0.5 * f64::from(intrinsics.width) / intrinsics.fx).atan();
        let half_fov_y = (0.5 * f64::from(intrinsics.height) / intrinsics.fy).atan();
        let half_fov = half_fov_x.min(half_fov_y);
        let radius = 1.2 * half_diag.max(0.5) / half_fov.sin();
        Orbit {
            center,
            radius,
            height: 0.0,
            frames,
        }
    }
}

impl CameraPath {
    pub fn len(&self) -> usize {
        match self {
            CameraPath::Orbit(o) => o.frames,
            CameraPath::Keyframes(k) => k.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cameras(&self, intrinsics: CameraIntrinsics) -> Result<Vec<Camera>, PathError> {
        if self.is_empty() {
            return Err(PathError::NoFrames);
        }
        match self {
            CameraPath::Orbit(o) => {
                if !(o.radius > 0.0 && o.radius.is_finite()) {
                    return Err(PathError::Radius(o.radius));
                }
                (0..o.frames)
                    .map(|index| {
                        let a = index as f64 * TAU / o.frames as f64;
                        let eye = [
                            o.center[0] + o.radius * a.sin(),
                            o.center[1] + o.height,
                            o.center[2] - o.radius * a.cos(),
                        ];
                        Camera::look_at(intrinsics, eye, o.center, WORLD_UP)
                            .map_err(|source| PathError::Orbit { index, source })
                    })
                    .collect()
            }
            CameraPath::Keyframes(keys) => keys
                .iter()
                .enumerate()
                .map(|(index, k)| {
                    Camera::look_at(intrinsics, k.eye, k.target, k.up.unwrap_or(WORLD_UP))
                        .map_err(|source| PathError::Keyframe { index, source })
                })
                .collect(),
        }
    }
}
