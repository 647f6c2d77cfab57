//! Posed training views assembled from a sparse model and an image folder.

use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::camera::{Camera, CameraError};
use crate::colmap::{SparseModel, SparsePoint};
use crate::image::{ImageBuffer, ImageError};
use crate::math::{self, Vec3};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("image `{0}` not found")]
    MissingImage(String),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("image `{name}` is {actual:?} but its camera expects {expected:?}")]
    Dimensions {
        name: String,
        expected: (u32, u32),
        actual: (u32, u32),
    },
    #[error("image `{name}`: {source}")]
    Camera {
        name: String,
        #[source]
        source: CameraError,
    },
    #[error("image `{0}` references an unknown camera")]
    UnknownCamera(String),
    #[error("downscale factor must be at least 1")]
    Downscale,
}

#[derive(Debug, Clone)]
pub struct TrainingView {
    pub name: String,
    pub camera: Camera,
    pub image: ImageBuffer,
}

#[derive(Debug, Clone, Default)]
pub struct TrainingDataset {
    pub views: Vec<TrainingView>,
    pub seed_points: Vec<SparsePoint>,
}

impl TrainingDataset {
    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }

    pub fn cameras(&self) -> Vec<Camera> {
        self.views.iter().map(|v| v.camera).collect()
    }

    pub fn scene_extent(&self) -> f64 {
        scene_extent(&self.cameras())
    }
}

/// Radius of the sphere around the camera centroid enclosing every camera
/// center. Falls back to 1 for a single camera or coincident centers.
pub fn scene_extent(cameras: &[Camera]) -> f64 {
    if cameras.is_empty() {
        return 1.0;
    }
    let centers: Vec<Vec3> = cameras.iter().map(Camera::center).collect();
    let n = centers.len() as f64;
    let mut centroid = [0.0; 3];
    for c in &centers {
        centroid = math::add(centroid, *c);
    }
    let centroid = math::scale(centroid, 1.0 / n);
    let radius = centers
        .iter()
        .map(|c| math::norm(math::sub(*c, centroid)))
        .fold(0.0, f64::max);
    if radius > 1e-9 && radius.is_finite() {
        radius
    } else {
        1.0
    }
}

/// Decodes every image of `sparse` from `image_dir`, in model order.
///
/// Images must match their camera's resolution exactly; `downscale` then
/// reduces pixels and intrinsics by the same integer factor. Either every
/// view is returned or the first failing image (in model order) is reported.
pub fn assemble_dataset(
    sparse: &SparseModel,
    image_dir: &Path,
    downscale: u32,
) -> Result<TrainingDataset, DatasetError> {
    if downscale == 0 {
        return Err(DatasetError::Downscale);
    }
    let results: Vec<Result<TrainingView, DatasetError>> = sparse
        .images
        .par_iter()
        .map(|img| {
            let intr = sparse
                .intrinsics(img.camera_id)
                .ok_or_else(|| DatasetError::UnknownCamera(img.name.clone()))?;
            let path = image_dir.join(&img.name);
            if !path.is_file() {
                return Err(DatasetError::MissingImage(img.name.clone()));
            }
            let pixels = ImageBuffer::load(&path)?;
            let actual = (pixels.width(), pixels.height());
            if actual != (intr.width, intr.height) {
                return Err(DatasetError::Dimensions {
                    name: img.name.clone(),
                    expected: (intr.width, intr.height),
                    actual,
                });
            }
            let camera = Camera::from_quaternion(
                intr.downscaled(downscale),
                img.rotation,
                img.translation,
            )
            .map_err(|source| DatasetError::Camera {
                name: img.name.clone(),
                source,
            })?;
            Ok(TrainingView {
                name: img.name.clone(),
                camera,
                image: pixels.downscale(downscale),
            })
        })
        .collect();
    let views = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(TrainingDataset {
        views,
        seed_points: sparse.points.clone(),
    })
}
