//! Tile-based forward rasterization of splat clouds.
//!
//! Splats are projected to 2D Gaussians, globally depth sorted once per frame,
//! binned to square tiles, and composited front to back per pixel. Each tile
//! owns its pixels, so tiles render in parallel without synchronization and
//! the output does not depend on the worker count.

mod project;
mod reference;
mod render;
mod sort;

use thiserror::Error;

pub use project::{project_splat, ProjectedSplat, BLUR, MAX_ALPHA, MIN_ALPHA, MIN_TRANSMITTANCE};
pub use reference::render_reference;
pub use render::{render, render_with, RenderOptions, RenderStats, DEFAULT_TILE_SIZE};
pub use sort::depth_sort;

pub(crate) use project::projection_jacobian;
pub(crate) use render::{prepare_frame, Frame};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenderError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{Camera, CameraIntrinsics};
    use crate::gaussian::{Splat, SplatCloud};
    use crate::math::IDENTITY3;

    fn camera(w: u32, h: u32, f: f64) -> Camera {
        Camera::new(
            CameraIntrinsics {
                width: w,
                height: h,
                fx: f,
                fy: f,
                cx: f64::from(w) / 2.0,
                cy: f64::from(h) / 2.0,
            },
            IDENTITY3,
            [0.0; 3],
        )
        .unwrap()
    }

    #[test]
    fn empty_cloud_renders_background() {
        let cam = camera(40, 30, 30.0);
        let (img, stats) = render(&SplatCloud::default(), &cam, [0.0; 3]).unwrap();
        assert!(img.pixels().iter().all(|p| *p == [0.0; 3]));
        assert!(stats.is_empty());
        let bg = [0.2, 0.4, 0.6];
        let (img, _) = render(&SplatCloud::default(), &cam, bg).unwrap();
        assert!(img.pixels().iter().all(|p| *p == bg));
    }

    #[test]
    fn opaque_white_splat_saturates_at_clamp() {
        let cam = camera(64, 64, 60.0);
        let mut splat = Splat {
            position: [0.0, 0.0, 3.0],
            log_scale: [0.0; 3],
            opacity_logit: 20.0,
            ..Splat::default()
        };
        splat.set_base_color([1.0; 3]);
        let bg = [0.25, 0.5, 0.0];
        let cloud = SplatCloud::new(vec![splat], 0);
        let (img, stats) = render(&cloud, &cam, bg).unwrap();
        // g = min(0.99, α·1) at the center, so C = 0.99·1 + 0.01·bg.
        let center = img.get(32, 32);
        for c in 0..3 {
            let want = 0.99 + 0.01 * bg[c];
            assert!((center[c] - want).abs() < 0.02, "channel {c}: {}", center[c]);
        }
        assert!(stats.visible[0]);
        assert!(stats.max_radius[0] >= 1.0);
    }

    #[test]
    fn zero_size_image_is_rejected() {
        let mut cam = camera(8, 8, 10.0);
        cam.intrinsics.width = 0;
        assert!(matches!(
            render(&SplatCloud::default(), &cam, [0.0; 3]),
            Err(RenderError::InvalidParameter(_))
        ));
        assert!(render_reference(&SplatCloud::default(), &cam, [0.0; 3]).is_err());
    }

    #[test]
    fn single_splat_matches_reference() {
        let cam = camera(48, 40, 40.0);
        let mut splat = Splat {
            position: [0.2, -0.1, 2.5],
            log_scale: [-1.5, -2.0, -1.8],
            rotation: [0.9, 0.1, 0.3, -0.2],
            opacity_logit: 1.0,
            ..Splat::default()
        };
        splat.set_base_color([0.8, 0.3, 0.1]);
        let cloud = SplatCloud::new(vec![splat], 0);
        let (tiled, _) = render(&cloud, &cam, [0.1; 3]).unwrap();
        let reference = render_reference(&cloud, &cam, [0.1; 3]).unwrap();
        assert!(tiled.max_abs_diff(&reference) <= 1e-5);
    }

    #[test]
    fn permuted_order_at_distinct_depths_is_identical() {
        let cam = camera(32, 32, 30.0);
        let mut splats: Vec<Splat> = (0..5)
            .map(|i| {
                let mut s = Splat {
                    position: [0.05 * f64::from(i) - 0.1, 0.0, 2.0 + 0.3 * f64::from(i)],
                    log_scale: [-1.2; 3],
                    opacity_logit: 0.5,
                    ..Splat::default()
                };
                s.set_base_color([0.2 * f64::from(i), 0.5, 1.0 - 0.2 * f64::from(i)]);
                s
            })
            .collect();
        let a = render_reference(&SplatCloud::new(splats.clone(), 0), &cam, [0.0; 3]).unwrap();
        splats.reverse();
        splats.swap(0, 3);
        let b = render_reference(&SplatCloud::new(splats, 0), &cam, [0.0; 3]).unwrap();
        assert_eq!(a, b);
    }
}
