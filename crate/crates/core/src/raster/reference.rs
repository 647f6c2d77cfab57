use super::project::{project_unculled, ProjectedSplat};
use super::render::shade_pixel;
use super::sort::depth_sort;
use super::RenderError;
use crate::camera::Camera;
use crate::gaussian::SplatCloud;
use crate::image::ImageBuffer;
use crate::math::Vec3;

/// Brute-force renderer: every pixel visits every splat in front of the near
/// plane, globally depth sorted. No binning, no screen culling. Meant as a
/// test oracle for small clouds.
pub fn render_reference(
    cloud: &SplatCloud,
    camera: &Camera,
    background: Vec3,
) -> Result<ImageBuffer, RenderError> {
    camera
        .validate()
        .map_err(|e| RenderError::InvalidParameter(e.to_string()))?;
    let projected: Vec<ProjectedSplat> = cloud
        .splats
        .iter()
        .filter_map(|s| project_unculled(s, camera, cloud.active_sh_degree))
        .collect();
    let depths: Vec<f64> = projected.iter().map(|p| p.depth).collect();
    let sorted: Vec<ProjectedSplat> = depth_sort(&depths)
        .into_iter()
        .map(|i| projected[i])
        .collect();

    let mut image = ImageBuffer::new(camera.width(), camera.height(), background);
    for py in 0..camera.height() {
        for px in 0..camera.width() {
            let rgb = shade_pixel(
                f64::from(px) + 0.5,
                f64::from(py) + 0.5,
                sorted.iter(),
                background,
            );
            image.set(px, py, rgb);
        }
    }
    Ok(image)
}
