use crate::camera::Camera;
use crate::gaussian::{covariance3d, Splat};
use crate::math::{self, Mat2, Vec3};
use crate::sh;

/// Screen-space low-pass term added to every projected covariance, in px².
pub const BLUR: f64 = 0.3;
/// Contributions below this are skipped.
pub const MIN_ALPHA: f64 = 1.0 / 255.0;
/// Per-splat contribution cap.
pub const MAX_ALPHA: f64 = 0.99;
/// Compositing stops once transmittance falls below this.
pub const MIN_TRANSMITTANCE: f64 = 1e-4;

/// A splat after perspective projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedSplat {
    pub mean2d: [f64; 2],
    pub cov2d: Mat2,
    /// Inverse of `cov2d` as (a, b, c) for [[a, b], [b, c]].
    pub conic: [f64; 3],
    pub depth: f64,
    pub rgb: Vec3,
    pub alpha: f64,
    /// ceil(3·σ_max) in pixels.
    pub radius: f64,
    /// Half-size of the square outside of which the contribution is provably
    /// below `MIN_ALPHA`; never smaller than `radius`.
    pub extent: f64,
}

impl ProjectedSplat {
    /// Inclusive pixel index range whose centers lie inside the extent square,
    /// clipped to the image. `None` when it misses the image.
    pub fn pixel_bounds(&self, width: u32, height: u32) -> Option<([u32; 2], [u32; 2])> {
        let lo_x = (self.mean2d[0] - self.extent - 0.5).ceil().max(0.0);
        let hi_x = (self.mean2d[0] + self.extent - 0.5)
            .floor()
            .min(f64::from(width) - 1.0);
        let lo_y = (self.mean2d[1] - self.extent - 0.5).ceil().max(0.0);
        let hi_y = (self.mean2d[1] + self.extent - 0.5)
            .floor()
            .min(f64::from(height) - 1.0);
        if !(lo_x <= hi_x && lo_y <= hi_y) {
            return None;
        }
        Some(([lo_x as u32, hi_x as u32], [lo_y as u32, hi_y as u32]))
    }

    /// Gaussian falloff at a pixel center: returns (g, exp(power)) or `None`
    /// when the contribution is skipped.
    #[inline]
    pub(crate) fn contribution(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        let dx = x - self.mean2d[0];
        let dy = y - self.mean2d[1];
        let [a, b, c] = self.conic;
        let power = -0.5 * (a * dx * dx + 2.0 * b * dx * dy + c * dy * dy);
        let falloff = power.exp();
        let g = (self.alpha * falloff).min(MAX_ALPHA);
        if g < MIN_ALPHA {
            return None;
        }
        Some((g, falloff))
    }
}

/// Projects one splat; `None` when it lies on or behind the near plane or its
/// footprint misses the image.
pub fn project_splat(splat: &Splat, camera: &Camera, sh_degree: u8) -> Option<ProjectedSplat> {
    let p = project_unculled(splat, camera, sh_degree)?;
    p.pixel_bounds(camera.width(), camera.height())?;
    Some(p)
}

/// Projection with only the near-plane test applied.
pub(crate) fn project_unculled(
    splat: &Splat,
    camera: &Camera,
    sh_degree: u8,
) -> Option<ProjectedSplat> {
    let t = camera.world_to_camera(splat.position);
    if !(t[2] > camera.near_plane) {
        return None;
    }
    let cov = covariance3d(splat.log_scale, splat.rotation).ok()?;
    let w = &camera.rotation;
    let v = math::mat_mul(&math::mat_mul(w, &cov), &math::transpose(w));
    let jac = projection_jacobian(camera, t);
    let cov2d = project_covariance(&jac, &v);
    let det = cov2d[0][0] * cov2d[1][1] - cov2d[0][1] * cov2d[1][0];
    if !(det > 0.0) || !det.is_finite() {
        return None;
    }
    let conic = [cov2d[1][1] / det, -cov2d[0][1] / det, cov2d[0][0] / det];
    let k = &camera.intrinsics;
    let mean2d = [k.fx * t[0] / t[2] + k.cx, k.fy * t[1] / t[2] + k.cy];

    let view = math::sub(splat.position, camera.center());
    let vn = math::norm(view);
    let dir = if vn > 0.0 {
        math::scale(view, 1.0 / vn)
    } else {
        [0.0, 0.0, 1.0]
    };
    let degree = sh_degree.min(sh::MAX_SH_DEGREE);
    let basis = sh::basis(dir, degree);
    let rgb = crate::gaussian::shade_with_basis(&splat.sh, &basis, sh::coeff_count(degree));
    let alpha = splat.opacity();

    let (lambda_max, _) = math::sym2_eigenvalues(&cov2d);
    let sigma = lambda_max.max(0.0).sqrt();
    let radius = (3.0 * sigma).ceil();
    let extent = if alpha * 255.0 > 1.0 {
        let cutoff = (2.0 * (alpha * 255.0).ln()).sqrt() * sigma;
        radius.max((cutoff * (1.0 + 1e-9)).ceil())
    } else {
        // Can never reach MIN_ALPHA.
        return None;
    };
    if !(mean2d[0].is_finite() && mean2d[1].is_finite() && extent.is_finite()) {
        return None;
    }
    if !rgb.iter().all(|c| c.is_finite()) {
        return None;
    }
    Some(ProjectedSplat {
        mean2d,
        cov2d,
        conic,
        depth: t[2],
        rgb,
        alpha,
        radius,
        extent,
    })
}

/// 2×3 Jacobian of the pinhole projection at camera-space point `t`.
pub(crate) fn projection_jacobian(camera: &Camera, t: Vec3) -> [[f64; 3]; 2] {
    let k = &camera.intrinsics;
    let iz = 1.0 / t[2];
    let iz2 = iz * iz;
    [
        [k.fx * iz, 0.0, -k.fx * t[0] * iz2],
        [0.0, k.fy * iz, -k.fy * t[1] * iz2],
    ]
}

fn project_covariance(j: &[[f64; 3]; 2], v: &math::Mat3) -> Mat2 {
    // J·V (2×3), then (J·V)·Jᵀ.
    let mut jv = [[0.0; 3]; 2];
    for r in 0..2 {
        for c in 0..3 {
            jv[r][c] = j[r][0] * v[0][c] + j[r][1] * v[1][c] + j[r][2] * v[2][c];
        }
    }
    let mut out = [[0.0; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            out[r][c] = jv[r][0] * j[c][0] + jv[r][1] * j[c][1] + jv[r][2] * j[c][2];
        }
    }
    let off = 0.5 * (out[0][1] + out[1][0]);
    [[out[0][0] + BLUR, off], [off, out[1][1] + BLUR]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::CameraIntrinsics;
    use crate::math::IDENTITY3;

    fn camera() -> Camera {
        Camera::new(
            CameraIntrinsics {
                width: 640,
                height: 480,
                fx: 500.0,
                fy: 500.0,
                cx: 320.0,
                cy: 240.0,
            },
            IDENTITY3,
            [0.0; 3],
        )
        .unwrap()
    }

    #[test]
    fn on_axis_splat_projects_to_principal_point() {
        let splat = Splat {
            position: [0.0, 0.0, 5.0],
            ..Splat::default()
        };
        let p = project_splat(&splat, &camera(), 0).unwrap();
        assert_eq!(p.mean2d, [320.0, 240.0]);
        assert_eq!(p.depth, 5.0);
    }

    #[test]
    fn isotropic_on_axis_covariance_is_closed_form() {
        let s: f64 = 0.05;
        let z = 4.0;
        let splat = Splat {
            position: [0.0, 0.0, z],
            log_scale: [s.ln(); 3],
            ..Splat::default()
        };
        let p = project_splat(&splat, &camera(), 0).unwrap();
        let expect = (500.0 * s / z).powi(2) + BLUR;
        assert!((p.cov2d[0][0] - expect).abs() < 1e-6);
        assert!((p.cov2d[1][1] - expect).abs() < 1e-6);
        assert!(p.cov2d[0][1].abs() < 1e-6);
        assert_eq!(p.radius, (3.0 * expect.sqrt()).ceil());
        assert!(p.extent >= p.radius);
    }

    #[test]
    fn behind_camera_is_culled() {
        let splat = Splat {
            position: [0.0, 0.0, -1.0],
            ..Splat::default()
        };
        assert!(project_splat(&splat, &camera(), 0).is_none());
    }

    #[test]
    fn off_screen_is_culled() {
        let splat = Splat {
            position: [100.0, 0.0, 1.0],
            log_scale: [-4.0; 3],
            ..Splat::default()
        };
        assert!(project_splat(&splat, &camera(), 0).is_none());
        assert!(project_unculled(&splat, &camera(), 0).is_some());
    }

    #[test]
    fn falloff_outside_extent_is_below_threshold() {
        let splat = Splat {
            position: [0.1, -0.05, 3.0],
            log_scale: [-2.0, -3.0, -2.5],
            rotation: [0.9, 0.3, 0.1, -0.2],
            opacity_logit: 8.0,
            ..Splat::default()
        };
        let p = project_splat(&splat, &camera(), 0).unwrap();
        let (xs, ys) = p.pixel_bounds(640, 480).unwrap();
        for y in 0..480u32 {
            for x in 0..640u32 {
                let inside = (xs[0]..=xs[1]).contains(&x) && (ys[0]..=ys[1]).contains(&y);
                if !inside {
                    assert!(p.contribution(f64::from(x) + 0.5, f64::from(y) + 0.5).is_none());
                }
            }
        }
    }
}
