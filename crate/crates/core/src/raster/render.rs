use rayon::prelude::*;

use super::project::{project_splat, ProjectedSplat, MIN_TRANSMITTANCE};
use super::sort::depth_sort;
use super::RenderError;
use crate::camera::Camera;
use crate::gaussian::SplatCloud;
use crate::image::ImageBuffer;
use crate::math::Vec3;

pub const DEFAULT_TILE_SIZE: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RenderOptions {
    pub tile_size: u32,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            tile_size: DEFAULT_TILE_SIZE,
        }
    }
}

/// Per-splat statistics used to drive densification.
///
/// `render` fills `visible` and `max_radius`; the backward pass adds to the
/// gradient accumulators. Accumulators from several frames are combined with
/// [`RenderStats::absorb`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RenderStats {
    pub visible: Vec<bool>,
    /// Largest screen radius seen, in pixels.
    pub max_radius: Vec<f64>,
    /// Sum of screen-space mean gradient norms, in normalized device units.
    pub grad_accum: Vec<f64>,
    /// Number of frames contributing to `grad_accum`.
    pub grad_count: Vec<u32>,
    /// Sum of world-space position gradients.
    pub position_grad: Vec<Vec3>,
}

impl RenderStats {
    pub fn new(len: usize) -> Self {
        Self {
            visible: vec![false; len],
            max_radius: vec![0.0; len],
            grad_accum: vec![0.0; len],
            grad_count: vec![0; len],
            position_grad: vec![[0.0; 3]; len],
        }
    }

    pub fn len(&self) -> usize {
        self.visible.len()
    }

    pub fn is_empty(&self) -> bool {
        self.visible.is_empty()
    }

    /// Mean accumulated screen-space gradient norm of splat `i`.
    pub fn mean_grad(&self, i: usize) -> f64 {
        if self.grad_count[i] == 0 {
            0.0
        } else {
            self.grad_accum[i] / f64::from(self.grad_count[i])
        }
    }

    /// Folds another frame's statistics into this accumulator.
    pub fn absorb(&mut self, other: &RenderStats) {
        assert_eq!(self.len(), other.len(), "stats length mismatch");
        for i in 0..self.len() {
            self.visible[i] |= other.visible[i];
            self.max_radius[i] = self.max_radius[i].max(other.max_radius[i]);
            self.grad_accum[i] += other.grad_accum[i];
            self.grad_count[i] += other.grad_count[i];
            for c in 0..3 {
                self.position_grad[i][c] += other.position_grad[i][c];
            }
        }
    }
}

/// Splats binned to screen tiles; each bin lists cloud indices in depth order.
#[derive(Debug, Clone)]
pub(crate) struct TileGrid {
    pub size: u32,
    pub cols: u32,
    pub bins: Vec<Vec<u32>>,
}

impl TileGrid {
    /// Pixel rectangle `(x0, y0, x1, y1)` (exclusive upper bounds) of tile `t`.
    pub fn rect(&self, t: usize, width: u32, height: u32) -> (u32, u32, u32, u32) {
        let tx = t as u32 % self.cols;
        let ty = t as u32 / self.cols;
        let x0 = tx * self.size;
        let y0 = ty * self.size;
        (
            x0,
            y0,
            (x0 + self.size).min(width),
            (y0 + self.size).min(height),
        )
    }
}

/// Projection and binning shared between the forward and backward passes.
pub(crate) struct Frame {
    pub projected: Vec<Option<ProjectedSplat>>,
    pub tiles: TileGrid,
    pub width: u32,
    pub height: u32,
    pub background: Vec3,
}

pub(crate) fn prepare_frame(
    cloud: &SplatCloud,
    camera: &Camera,
    background: Vec3,
    options: RenderOptions,
) -> Result<Frame, RenderError> {
    camera
        .validate()
        .map_err(|e| RenderError::InvalidParameter(e.to_string()))?;
    if options.tile_size == 0 {
        return Err(RenderError::InvalidParameter("tile size must be positive".into()));
    }
    let (width, height) = (camera.width(), camera.height());
    let degree = cloud.active_sh_degree;
    let projected: Vec<Option<ProjectedSplat>> = cloud
        .splats
        .par_iter()
        .map(|s| project_splat(s, camera, degree))
        .collect();

    let visible: Vec<usize> = (0..projected.len())
        .filter(|&i| projected[i].is_some())
        .collect();
    let depths: Vec<f64> = visible
        .iter()
        .map(|&i| projected[i].as_ref().map_or(0.0, |p| p.depth))
        .collect();
    let order = depth_sort(&depths);

    let size = options.tile_size;
    let cols = width.div_ceil(size);
    let rows = height.div_ceil(size);
    let mut bins = vec![Vec::new(); (cols * rows) as usize];
    for &rank in &order {
        let idx = visible[rank];
        let Some(p) = &projected[idx] else { continue };
        let Some((xs, ys)) = p.pixel_bounds(width, height) else {
            continue;
        };
        for ty in ys[0] / size..=ys[1] / size {
            for tx in xs[0] / size..=xs[1] / size {
                bins[(ty * cols + tx) as usize].push(idx as u32);
            }
        }
    }
    Ok(Frame {
        projected,
        tiles: TileGrid {
            size,
            cols,
            bins,
        },
        width,
        height,
        background,
    })
}

/// Front-to-back compositing of one pixel over splats already in depth order.
#[inline]
pub(crate) fn shade_pixel<'a>(
    x: f64,
    y: f64,
    splats: impl Iterator<Item = &'a ProjectedSplat>,
    background: Vec3,
) -> Vec3 {
    let mut color = [0.0; 3];
    let mut transmittance = 1.0;
    for p in splats {
        let Some((g, _)) = p.contribution(x, y) else {
            continue;
        };
        let w = transmittance * g;
        for c in 0..3 {
            color[c] += w * p.rgb[c];
        }
        transmittance *= 1.0 - g;
        if transmittance < MIN_TRANSMITTANCE {
            break;
        }
    }
    for c in 0..3 {
        color[c] += transmittance * background[c];
    }
    color
}

impl Frame {
    pub fn stats(&self) -> RenderStats {
        let mut stats = RenderStats::new(self.projected.len());
        for (i, p) in self.projected.iter().enumerate() {
            if let Some(p) = p {
                stats.visible[i] = true;
                stats.max_radius[i] = p.radius;
            }
        }
        stats
    }

    pub fn rasterize(&self) -> ImageBuffer {
        let tile_pixels: Vec<Vec<Vec3>> = (0..self.tiles.bins.len())
            .into_par_iter()
            .map(|t| {
                let (x0, y0, x1, y1) = self.tiles.rect(t, self.width, self.height);
                let bin = &self.tiles.bins[t];
                let mut out = Vec::with_capacity(((x1 - x0) * (y1 - y0)) as usize);
                for py in y0..y1 {
                    for px in x0..x1 {
                        let splats = bin
                            .iter()
                            .filter_map(|&i| self.projected[i as usize].as_ref());
                        out.push(shade_pixel(
                            f64::from(px) + 0.5,
                            f64::from(py) + 0.5,
                            splats,
                            self.background,
                        ));
                    }
                }
                out
            })
            .collect();

        let mut image = ImageBuffer::new(self.width, self.height, [0.0; 3]);
        for (t, pixels) in tile_pixels.into_iter().enumerate() {
            let (x0, y0, x1, _) = self.tiles.rect(t, self.width, self.height);
            let w = (x1 - x0) as usize;
            for (k, rgb) in pixels.into_iter().enumerate() {
                image.set(x0 + (k % w) as u32, y0 + (k / w) as u32, rgb);
            }
        }
        image
    }
}

/// Tiled forward render with the default 16×16 tiles.
pub fn render(
    cloud: &SplatCloud,
    camera: &Camera,
    background: Vec3,
) -> Result<(ImageBuffer, RenderStats), RenderError> {
    render_with(cloud, camera, background, RenderOptions::default())
}

pub fn render_with(
    cloud: &SplatCloud,
    camera: &Camera,
    background: Vec3,
    options: RenderOptions,
) -> Result<(ImageBuffer, RenderStats), RenderError> {
    let frame = prepare_frame(cloud, camera, background, options)?;
    Ok((frame.rasterize(), frame.stats()))
}
